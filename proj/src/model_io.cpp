#include "suvm/model_io.hpp"

#include "bytes.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>

namespace suvm {

namespace {

constexpr char kMagic[4] = {'S', 'U', 'V', 'M'};

void put_tag(bytes::Writer& w, const char* tag) { w.put_raw(tag, 4); }

void put_vector(bytes::Writer& w, const Eigen::VectorXd& v) { w.put_matrix(v); }

Eigen::VectorXd get_vector(bytes::Reader& r) {
  auto m = r.get_matrix<Eigen::MatrixXd>();
  if (m.cols() != 1 && m.size() != 0) throw Error(ErrorCode::Format, "expected a column vector");
  return Eigen::Map<Eigen::VectorXd>(m.data(), m.size());
}

void put_image(bytes::Writer& w, const Image& img) { w.put_matrix(img); }
Image get_image(bytes::Reader& r) { return r.get_matrix<Image>(); }

// --- dictionary

void put_dictionary(bytes::Writer& w, const dict::VisualDictionary& d) {
  w.put<std::int32_t>(d.window.width);
  w.put<std::int32_t>(d.window.height);
  w.put<std::int32_t>(d.hog.cell);
  w.put<std::int32_t>(d.hog.bins);
  w.put<std::int32_t>(d.hog.block);
  w.put<double>(d.hog.clip);
  put_vector(w, d.pca.mean);
  w.put_matrix(d.pca.basis);
  put_vector(w, d.pca.explained_variance_ratio);
  w.put<std::uint8_t>(d.pca.rank_reduced ? 1 : 0);
  w.put_matrix(d.centroids);
  w.put<std::uint64_t>(d.counts.size());
  for (auto c : d.counts) w.put<std::uint64_t>(c);
  put_vector(w, d.spread);
  w.put_matrix(d.distance_quantiles);
  w.put<std::uint64_t>(d.mean_patches.size());
  for (const auto& p : d.mean_patches) put_image(w, p);
}

dict::VisualDictionary get_dictionary(bytes::Reader& r) {
  dict::VisualDictionary d;
  d.window.width = r.get<std::int32_t>();
  d.window.height = r.get<std::int32_t>();
  d.hog.cell = r.get<std::int32_t>();
  d.hog.bins = r.get<std::int32_t>();
  d.hog.block = r.get<std::int32_t>();
  d.hog.clip = r.get<double>();
  d.pca.mean = get_vector(r);
  d.pca.basis = r.get_matrix<Eigen::MatrixXd>();
  d.pca.explained_variance_ratio = get_vector(r);
  d.pca.rank_reduced = r.get<std::uint8_t>() != 0;
  d.centroids = r.get_matrix<Eigen::MatrixXd>();
  d.counts.resize(r.get<std::uint64_t>());
  for (auto& c : d.counts) c = r.get<std::uint64_t>();
  d.spread = get_vector(r);
  d.distance_quantiles = r.get_matrix<Eigen::MatrixXd>();
  const auto patches = r.get<std::uint64_t>();
  if (patches > r.remaining()) throw Error(ErrorCode::Format, "implausible patch count");
  for (std::uint64_t i = 0; i < patches; ++i) d.mean_patches.push_back(get_image(r));
  return d;
}

// --- model

void put_model(bytes::Writer& w, const gen::SuvModel& m) {
  w.put<std::int32_t>(m.window.width);
  w.put<std::int32_t>(m.window.height);
  w.put<double>(m.part_inclusion);
  w.put_string(m.provenance.corpus);
  w.put_string(m.provenance.parameters);
  w.put_string(m.provenance.notes);

  w.put<std::uint64_t>(m.viewlets.size());
  for (const auto& v : m.viewlets) {
    w.put<std::int32_t>(v.word);
    put_vector(w, v.centroid);
    w.put<double>(v.appearance_variance);
    put_image(w, v.patch);
  }

  w.put<std::uint64_t>(m.srn.nodes.size());
  for (int n : m.srn.nodes) w.put<std::int32_t>(n);
  w.put<std::uint64_t>(m.srn.edges.size());
  for (const auto& e : m.srn.edges) {
    w.put<std::int32_t>(e.i);
    w.put<std::int32_t>(e.j);
    for (int k = 0; k < 3; ++k) w.put<double>(e.stiffness(k));
    for (int k = 0; k < 3; ++k) w.put<double>(e.rest(k));
    w.put<double>(e.variance);
    w.put<std::uint64_t>(e.support);
  }
  put_vector(w, m.srn.extent_x);
  put_vector(w, m.srn.extent_y);

  w.put<std::uint64_t>(m.cipc.edges.size());
  for (const auto& e : m.cipc.edges) {
    w.put<std::int32_t>(e.a);
    w.put<std::int32_t>(e.b);
    w.put<std::uint8_t>(e.kind == semantics::CipcKind::Stable ? 1 : 0);
  }
  w.put<std::uint64_t>(m.cipc.part.size());
  for (int p : m.cipc.part) w.put<std::int32_t>(p);
  w.put<std::int32_t>(m.cipc.part_count);

  put_vector(w, m.gpe.x);
  put_vector(w, m.gpe.y);
  put_vector(w, m.gpe.scale);
  for (double s : m.gpe.axis_stress) w.put<double>(s);
  w.put<double>(m.gpe.stress);
  w.put<std::int32_t>(m.gpe.iterations);
  w.put<std::uint8_t>(m.gpe.converged ? 1 : 0);
}

template <typename T>
void check_count(bytes::Reader& r, T n, std::size_t min_bytes) {
  if (n > r.remaining() / min_bytes) throw Error(ErrorCode::Format, "implausible element count");
}

gen::SuvModel get_model(bytes::Reader& r) {
  gen::SuvModel m;
  m.window.width = r.get<std::int32_t>();
  m.window.height = r.get<std::int32_t>();
  m.part_inclusion = r.get<double>();
  m.provenance.corpus = r.get_string();
  m.provenance.parameters = r.get_string();
  m.provenance.notes = r.get_string();

  const auto nv = r.get<std::uint64_t>();
  check_count(r, nv, 4);
  for (std::uint64_t i = 0; i < nv; ++i) {
    gen::Viewlet v;
    v.word = r.get<std::int32_t>();
    v.centroid = get_vector(r);
    v.appearance_variance = r.get<double>();
    v.patch = get_image(r);
    m.viewlets.push_back(std::move(v));
  }

  const auto nn = r.get<std::uint64_t>();
  check_count(r, nn, 4);
  for (std::uint64_t i = 0; i < nn; ++i) m.srn.nodes.push_back(r.get<std::int32_t>());
  const auto ne = r.get<std::uint64_t>();
  check_count(r, ne, 8);
  for (std::uint64_t i = 0; i < ne; ++i) {
    srn::SpringEdge e;
    e.i = r.get<std::int32_t>();
    e.j = r.get<std::int32_t>();
    for (int k = 0; k < 3; ++k) e.stiffness(k) = r.get<double>();
    for (int k = 0; k < 3; ++k) e.rest(k) = r.get<double>();
    e.variance = r.get<double>();
    e.support = r.get<std::uint64_t>();
    m.srn.edges.push_back(e);
  }
  m.srn.extent_x = get_vector(r);
  m.srn.extent_y = get_vector(r);

  const auto nc = r.get<std::uint64_t>();
  check_count(r, nc, 9);
  for (std::uint64_t i = 0; i < nc; ++i) {
    semantics::CipcEdge e;
    e.a = r.get<std::int32_t>();
    e.b = r.get<std::int32_t>();
    e.kind = r.get<std::uint8_t>() ? semantics::CipcKind::Stable : semantics::CipcKind::Exclusive;
    m.cipc.edges.push_back(e);
  }
  const auto np = r.get<std::uint64_t>();
  check_count(r, np, 4);
  for (std::uint64_t i = 0; i < np; ++i) m.cipc.part.push_back(r.get<std::int32_t>());
  m.cipc.part_count = r.get<std::int32_t>();

  m.gpe.x = get_vector(r);
  m.gpe.y = get_vector(r);
  m.gpe.scale = get_vector(r);
  for (double& s : m.gpe.axis_stress) s = r.get<double>();
  m.gpe.stress = r.get<double>();
  m.gpe.iterations = r.get<std::int32_t>();
  m.gpe.converged = r.get<std::uint8_t>() != 0;

  for (int p : m.cipc.part)
    if (p < 0 || p >= m.cipc.part_count) throw Error(ErrorCode::Format, "part id out of range");
  for (const auto& e : m.cipc.edges)
    if (e.a < 0 || e.b < 0 || static_cast<std::size_t>(std::max(e.a, e.b)) >= m.cipc.part.size())
      throw Error(ErrorCode::Format, "parts edge out of range");
  for (const auto& e : m.srn.edges)
    if (e.i < 0 || e.j < 0 || static_cast<std::size_t>(std::max(e.i, e.j)) >= m.srn.nodes.size())
      throw Error(ErrorCode::Format, "spring endpoint out of range");
  m.refresh();
  try {
    m.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Format, std::string("stored model is inconsistent: ") + e.what());
  }
  return m;
}

void put_section(bytes::Writer& out, const char* tag, const std::vector<unsigned char>& payload) {
  put_tag(out, tag);
  out.put<std::uint64_t>(payload.size());
  out.put_raw(payload.data(), payload.size());
  out.put<std::uint32_t>(crc32(payload.data(), payload.size()));
}

}  // namespace

std::uint32_t crc32(const unsigned char* data, std::size_t size) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<unsigned char> serialize(const ModelFile& file) {
  bytes::Writer out;
  out.put_raw(kMagic, 4);
  out.put<std::uint32_t>(ModelFile::kVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(2 + file.models.size()));

  bytes::Writer conf;
  const std::string text = to_json(file.config).dump();
  conf.put_raw(text.data(), text.size());
  put_section(out, "CONF", conf.data());

  bytes::Writer dict;
  put_dictionary(dict, file.dictionary);
  put_section(out, "DICT", dict.data());

  for (const auto& m : file.models) {
    bytes::Writer w;
    put_model(w, m);
    put_section(out, "MODL", w.data());
  }
  const auto& body = out.data();
  out.put<std::uint32_t>(crc32(body.data(), body.size()));
  return out.take();
}

std::uint32_t file_checksum(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4) throw Error(ErrorCode::Format, "model file too short");
  return bytes::Reader(bytes.data() + bytes.size() - 4, 4).get<std::uint32_t>();
}

ModelFile deserialize(const std::vector<unsigned char>& data) {
  if (data.size() < 16 || !std::equal(kMagic, kMagic + 4, data.begin()))
    throw Error(ErrorCode::Format, "not a SUVM model file");
  if (crc32(data.data(), data.size() - 4) != file_checksum(data))
    throw Error(ErrorCode::Format, "model file checksum mismatch");
  bytes::Reader r(data.data() + 4, data.size() - 8);
  const auto version = r.get<std::uint32_t>();
  if (version != ModelFile::kVersion)
    throw Error(ErrorCode::Format, "model file version " + std::to_string(version) + " is not supported (expected " +
                                       std::to_string(ModelFile::kVersion) + ")");
  const auto sections = r.get<std::uint32_t>();

  ModelFile file;
  bool have_conf = false;
  bool have_dict = false;
  for (std::uint32_t s = 0; s < sections; ++s) {
    char tag[4];
    for (char& c : tag) c = static_cast<char>(r.get<std::uint8_t>());
    const auto len = r.get<std::uint64_t>();
    if (len > r.remaining()) throw Error(ErrorCode::Format, "truncated section");
    const unsigned char* payload = data.data() + 4 + r.position();
    for (std::uint64_t i = 0; i < len; ++i) r.get<std::uint8_t>();
    if (crc32(payload, len) != r.get<std::uint32_t>()) throw Error(ErrorCode::Format, "section checksum mismatch");
    bytes::Reader pr(payload, len);
    const std::string name(tag, 4);
    if (name == "CONF") {
      try {
        file.config = config_from_json(nlohmann::json::parse(std::string(payload, payload + len)));
      } catch (const std::exception& e) {
        throw Error(ErrorCode::Format, std::string("stored configuration: ") + e.what());
      }
      have_conf = true;
    } else if (name == "DICT") {
      file.dictionary = get_dictionary(pr);
      have_dict = true;
    } else if (name == "MODL") {
      file.models.push_back(get_model(pr));
    } else {
      throw Error(ErrorCode::Format, "unknown section '" + name + "'");
    }
    if (name != "CONF" && pr.remaining() != 0) throw Error(ErrorCode::Format, "trailing bytes in section " + name);
  }
  if (r.remaining() != 0) throw Error(ErrorCode::Format, "trailing bytes after sections");
  if (!have_conf || !have_dict) throw Error(ErrorCode::Format, "model file lacks CONF or DICT");
  return file;
}

void save_model_file(const ModelFile& file, const std::string& path) {
  const auto data = serialize(file);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
}

ModelFile load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(data);
}

// ---------------------------------------------------------------------------

namespace {

template <typename Derived>
nlohmann::json matrix_json(const Eigen::DenseBase<Derived>& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

nlohmann::json vec3(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }

}  // namespace

nlohmann::json to_json(const ModelFile& file, bool include_patches) {
  const auto& d = file.dictionary;
  nlohmann::json dj{{"window", {d.window.width, d.window.height}},
                    {"hog", {{"cell", d.hog.cell}, {"bins", d.hog.bins}, {"block", d.hog.block}, {"clip", d.hog.clip}}},
                    {"words", d.k()},
                    {"dimension", d.dimension()},
                    {"pca_input_dim", d.pca.input_dim()},
                    {"explained_variance_ratio", vector_json(d.pca.explained_variance_ratio)},
                    {"counts", d.counts},
                    {"spread", vector_json(d.spread)},
                    {"centroids", matrix_json(d.centroids)}};
  if (include_patches) {
    nlohmann::json patches = nlohmann::json::array();
    for (const auto& p : d.mean_patches) patches.push_back(matrix_json(p));
    dj["mean_patches"] = patches;
  }

  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : file.models) {
    nlohmann::json viewlets = nlohmann::json::array();
    for (std::size_t k = 0; k < m.viewlets.size(); ++k) {
      const auto i = static_cast<Index>(k);
      viewlets.push_back({{"word", m.viewlets[k].word},
                          {"part", m.cipc.part[k]},
                          {"slot", m.slot_of[k]},
                          {"appearance_variance", m.viewlets[k].appearance_variance},
                          {"x", m.gpe.x(i)},
                          {"y", m.gpe.y(i)},
                          {"scale", m.gpe.scale(i)},
                          {"extent", {m.srn.extent_x(i), m.srn.extent_y(i)}}});
    }
    nlohmann::json springs = nlohmann::json::array();
    for (const auto& e : m.srn.edges)
      springs.push_back({{"i", e.i},
                         {"j", e.j},
                         {"stiffness", vec3(e.stiffness)},
                         {"rest", vec3(e.rest)},
                         {"variance", e.variance},
                         {"support", e.support}});
    nlohmann::json cipc = nlohmann::json::array();
    for (const auto& e : m.cipc.edges)
      cipc.push_back({{"a", e.a}, {"b", e.b}, {"kind", e.kind == semantics::CipcKind::Stable ? "stable" : "exclusive"}});
    models.push_back({{"viewlets", viewlets},
                      {"springs", springs},
                      {"parts_edges", cipc},
                      {"part_count", m.cipc.part_count},
                      {"anchor", m.srn.anchor()},
                      {"part_inclusion", m.part_inclusion},
                      {"embedding_stress", m.gpe.stress},
                      {"provenance",
                       {{"corpus", m.provenance.corpus},
                        {"parameters", m.provenance.parameters},
                        {"notes", m.provenance.notes}}}});
  }
  return {{"format", "SUVM"},
          {"version", ModelFile::kVersion},
          {"config", to_json(file.config)},
          {"dictionary", dj},
          {"models", models}};
}

}  // namespace suvm
