#include "suvm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <tuple>

namespace suvm::eval {

void GroundTruth::validate() const {
  for (const auto& img : images) {
    for (const auto& obj : img.objects) {
      if (std::find(categories.begin(), categories.end(), obj.label) == categories.end())
        throw Error(ErrorCode::InvalidInput, img.file + ": undeclared category '" + obj.label + "'");
      auto inside = [&](const Box& b) {
        return b.x0 >= 0.0 && b.y0 >= 0.0 && b.x1 <= img.width && b.y1 <= img.height && b.x0 <= b.x1 && b.y0 <= b.y1;
      };
      if (!inside(obj.box)) throw Error(ErrorCode::InvalidInput, img.file + ": box outside the image");
      for (const auto& [name, b] : obj.parts)
        if (!inside(b)) throw Error(ErrorCode::InvalidInput, img.file + ": part box '" + name + "' outside the image");
    }
  }
}

const TruthImage* GroundTruth::find(const std::string& file) const {
  for (const auto& img : images)
    if (img.file == file) return &img;
  return nullptr;
}

namespace {

nlohmann::json box_json(const Box& b) { return nlohmann::json::array({b.x0, b.y0, b.x1, b.y1}); }

Box box_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw Error(ErrorCode::Format, "box must be [x0, y0, x1, y1]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

nlohmann::json to_json(const GroundTruth& truth) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& img : truth.images) {
    nlohmann::json objects = nlohmann::json::array();
    for (const auto& obj : img.objects) {
      nlohmann::json o{{"label", obj.label}, {"box", box_json(obj.box)}};
      if (!obj.parts.empty()) {
        nlohmann::json parts = nlohmann::json::object();
        for (const auto& [name, b] : obj.parts) parts[name] = box_json(b);
        o["parts"] = parts;
      }
      objects.push_back(o);
    }
    images.push_back({{"file", img.file}, {"width", img.width}, {"height", img.height}, {"objects", objects}});
  }
  return {{"categories", truth.categories}, {"images", images}};
}

GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  try {
    GroundTruth t;
    t.categories = j.at("categories").get<std::vector<std::string>>();
    for (const auto& ji : j.at("images")) {
      TruthImage img;
      img.file = ji.at("file").get<std::string>();
      img.width = ji.at("width").get<int>();
      img.height = ji.at("height").get<int>();
      for (const auto& jo : ji.at("objects")) {
        TruthObject obj;
        obj.label = jo.at("label").get<std::string>();
        obj.box = box_from(jo.at("box"));
        if (jo.contains("parts"))
          for (const auto& [name, b] : jo["parts"].items()) obj.parts[name] = box_from(b);
        img.objects.push_back(std::move(obj));
      }
      t.images.push_back(std::move(img));
    }
    t.validate();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("ground truth: ") + e.what());
  }
}

GroundTruth load_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, path + ": " + e.what());
  }
  return ground_truth_from_json(j);
}

void save_ground_truth(const GroundTruth& truth, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << to_json(truth).dump(2) << '\n';
}

// ---------------------------------------------------------------------------

Matching match_detections(const std::vector<ScoredBox>& detections, const std::vector<Box>& truth,
                          double iou_threshold) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& da = detections[a];
    const auto& db = detections[b];
    if (da.score != db.score) return da.score > db.score;
    return std::tie(da.box.x0, da.box.y0, da.box.x1, da.box.y1) < std::tie(db.box.x0, db.box.y0, db.box.x1, db.box.y1);
  });

  Matching m;
  m.truth_of.assign(detections.size(), -1);
  std::vector<bool> claimed(truth.size(), false);
  for (std::size_t d : order) {
    int best = -1;
    double best_iou = iou_threshold;
    for (std::size_t t = 0; t < truth.size(); ++t) {
      if (claimed[t]) continue;
      const double o = iou(detections[d].box, truth[t]);
      if (o >= best_iou && (best < 0 || o > best_iou)) {
        best = static_cast<int>(t);
        best_iou = o;
      }
    }
    if (best >= 0) {
      claimed[best] = true;
      m.truth_of[d] = best;
      ++m.counts.tp;
    } else {
      ++m.counts.fp;
    }
  }
  m.counts.fn = static_cast<long long>(truth.size()) - m.counts.tp;
  return m;
}

Counts match_corpus(const std::vector<std::vector<ScoredBox>>& detections, const std::vector<std::vector<Box>>& truth,
                    double iou_threshold) {
  if (detections.size() != truth.size())
    throw Error(ErrorCode::InvalidInput, "detections and truth cover different image sets");
  Counts c;
  for (std::size_t i = 0; i < truth.size(); ++i) c += match_detections(detections[i], truth[i], iou_threshold).counts;
  return c;
}

std::vector<SweepPoint> threshold_sweep(const std::vector<std::vector<ScoredBox>>& detections,
                                        const std::vector<std::vector<Box>>& truth,
                                        const std::vector<double>& thresholds, double iou_threshold) {
  for (const auto& img : detections)
    for (const auto& d : img)
      if (!std::isfinite(d.score)) throw Error(ErrorCode::InvalidInput, "sweep needs finite scores");
  std::vector<SweepPoint> out;
  for (double cut : thresholds) {
    std::vector<std::vector<ScoredBox>> kept(detections.size());
    for (std::size_t i = 0; i < detections.size(); ++i)
      std::copy_if(detections[i].begin(), detections[i].end(), std::back_inserter(kept[i]),
                   [&](const ScoredBox& d) { return d.score >= cut; });
    out.push_back({cut, match_corpus(kept, truth, iou_threshold)});
  }
  return out;
}

ConfusionMatrix confusion_matrix(const std::vector<std::string>& query_labels, const std::vector<ImageSource>& queries,
                                 const std::vector<std::string>& model_labels,
                                 const std::function<bool(std::size_t, const Image&)>& fires) {
  if (query_labels.size() != queries.size())
    throw Error(ErrorCode::InvalidInput, "every query set needs a label");
  const auto rows = static_cast<Index>(queries.size());
  const auto cols = static_cast<Index>(model_labels.size());
  ConfusionMatrix cm;
  cm.queries = query_labels;
  cm.models = model_labels;
  cm.hits = Eigen::MatrixXi::Zero(rows, cols);
  cm.rate = Eigen::MatrixXd::Zero(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& q = queries[i];
    cm.images.push_back(static_cast<int>(q.size));
    for (std::size_t n = 0; n < q.size; ++n) {
      const Image img = q.load(n);
      for (Index j = 0; j < cols; ++j)
        if (fires(static_cast<std::size_t>(j), img)) ++cm.hits(i, j);
    }
    if (q.size == 0) {
      cm.rate.row(i).setConstant(std::numeric_limits<double>::quiet_NaN());
      cm.empty_rows.push_back(static_cast<int>(i));
    } else {
      cm.rate.row(i) = cm.hits.row(i).cast<double>() / static_cast<double>(q.size);
    }
  }
  return cm;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json counts_json(const Counts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"precision", c.precision()}, {"recall", c.recall()}};
}

std::string percent(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << 100.0 * v << '%';
  return s.str();
}

}  // namespace

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json j = counts_json(report.counts);
  j["iou_threshold"] = report.iou_threshold;
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : report.curve) {
    auto point = counts_json(p.counts);
    point["threshold"] = p.threshold;
    curve.push_back(point);
  }
  j["curve"] = curve;
  if (report.confusion) {
    const auto& cm = *report.confusion;
    nlohmann::json rows = nlohmann::json::array();
    for (Index i = 0; i < cm.rate.rows(); ++i) {
      nlohmann::json r = nlohmann::json::array();
      // JSON has no NaN; empty rows carry null.
      for (Index k = 0; k < cm.rate.cols(); ++k)
        r.push_back(std::isnan(cm.rate(i, k)) ? nlohmann::json(nullptr) : nlohmann::json(cm.rate(i, k)));
      rows.push_back(r);
    }
    j["confusion"] = {{"queries", cm.queries}, {"models", cm.models}, {"rate", rows},
                      {"images", cm.images},   {"empty_rows", cm.empty_rows}};
  }
  return j;
}

std::string to_table(const MetricsReport& report) {
  std::ostringstream s;
  const auto& c = report.counts;
  s << std::left << std::setw(16) << "true positive" << c.tp << '\n'
    << std::setw(16) << "false positive" << c.fp << '\n'
    << std::setw(16) << "false negative" << c.fn << '\n'
    << std::setw(16) << "recall" << percent(c.recall()) << '\n'
    << std::setw(16) << "precision" << percent(c.precision()) << '\n';
  if (!report.curve.empty()) {
    s << '\n' << std::right << std::setw(12) << "threshold" << std::setw(8) << "tp" << std::setw(8) << "fp"
      << std::setw(8) << "fn" << std::setw(10) << "recall" << std::setw(11) << "precision" << '\n';
    for (const auto& p : report.curve)
      s << std::setw(12) << std::setprecision(4) << p.threshold << std::setw(8) << p.counts.tp << std::setw(8)
        << p.counts.fp << std::setw(8) << p.counts.fn << std::setw(10) << percent(p.counts.recall()) << std::setw(11)
        << percent(p.counts.precision()) << '\n';
  }
  if (report.confusion) {
    const auto& cm = *report.confusion;
    std::size_t w = 8;
    for (const auto& l : cm.queries) w = std::max(w, l.size() + 2);
    for (const auto& l : cm.models) w = std::max(w, l.size() + 2);
    s << '\n' << std::left << std::setw(static_cast<int>(w)) << "query\\model";
    for (const auto& l : cm.models) s << std::right << std::setw(static_cast<int>(w)) << l;
    s << '\n';
    for (Index i = 0; i < cm.rate.rows(); ++i) {
      s << std::left << std::setw(static_cast<int>(w)) << cm.queries[i];
      for (Index k = 0; k < cm.rate.cols(); ++k) s << std::right << std::setw(static_cast<int>(w)) << percent(cm.rate(i, k));
      s << '\n';
    }
  }
  return s.str();
}

}  // namespace suvm::eval
