#pragma once

#include "suvm/core.hpp"
#include "suvm/dictionary.hpp"
#include "suvm/imaging.hpp"
#include "suvm/semantics.hpp"
#include "suvm/srn.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace suvm::gen {

struct Viewlet {
  int word = -1;
  Eigen::VectorXd centroid;
  double appearance_variance = 1.0;  ///< isotropic, per descriptor dimension
  Image patch;                       ///< representative pixels at the canonical window size
};

struct Provenance {
  std::string corpus;
  std::string parameters;  ///< serialized run configuration
  std::string notes;
};

/// A learned (or planted) object category. Node k of the spring network,
/// the parts clustering and the embedding all refer to viewlets[k].
struct SuvModel {
  std::vector<Viewlet> viewlets;
  srn::Srn srn;
  semantics::CipcGraph cipc;
  semantics::GpeEmbedding gpe;
  imaging::WindowSize window;
  double part_inclusion = 0.9;
  Provenance provenance;

  // Derived from cipc by refresh(): mutually exclusive slots inside each part.
  std::vector<std::vector<int>> slots;
  std::vector<int> slot_of;
  std::vector<std::vector<int>> part_slots;

  Index size() const { return static_cast<Index>(viewlets.size()); }
  /// Recomputes the slot structure; slots are components of rule-(i) edges.
  void refresh();
  /// Throws InvalidInput when component structures disagree or values are not finite.
  void validate() const;
};

/// Viewlets from dictionary words, slots filled in.
SuvModel make_model(srn::Srn network, semantics::CipcGraph cipc, semantics::GpeEmbedding gpe,
                    const dict::VisualDictionary& dictionary, double part_inclusion = 0.9);

// ---------------------------------------------------------------------------

/// One object instance. Positions are window corners and extents window sizes,
/// in pixels; scale is relative to the anchor viewlet.
struct Exemplar {
  std::vector<int> parts;
  std::vector<int> viewlets;  ///< local node indices, ascending
  std::vector<Eigen::VectorXd> appearances;
  Eigen::VectorXd scale;
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd extent_x;
  Eigen::VectorXd extent_y;
  double global_scale = 1.0;

  std::size_t count() const { return viewlets.size(); }
  Box box() const;
  void translate(double dx, double dy);
};

struct SampleOptions {
  double global_scale = 1.0;
  int max_redraws = 1000;
  bool sample_appearance = true;
};

/// The four-step process: parts, one viewlet per slot, scales from the
/// scale-axis GMRF with the anchor at unit scale, then positions from the x and
/// y GMRFs given the scales. The anchor window's corner lands at (0, 0).
Exemplar sample_exemplar(const SuvModel& model, std::uint64_t seed, const SampleOptions& options = {});

// ---------------------------------------------------------------------------

/// Observed viewlets of one instance; appearance enters through squared
/// descriptor distances to the viewlet centroids (empty to leave it out).
struct Observation {
  std::vector<int> viewlets;
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd extent_x;
  Eigen::VectorXd extent_y;
  Eigen::VectorXd appearance_sq;
};

Observation observe(const SuvModel& model, const Exemplar& exemplar);

struct LikelihoodBreakdown {
  double y = 0.0;
  double x = 0.0;
  double appearance = 0.0;
  double scale = 0.0;
  double viewlets = 0.0;

  double total() const { return y + x + appearance + scale + viewlets; }
};

/// log P(Y|S,V) + log P(X|S,V) + log P(A|V) + log P(S|V) + log P(V). Unobserved
/// viewlets are marginalized out of the scale factor and held at their
/// conditional mean scale inside the position factors. Positions and scales
/// are taken relative to the anchor if observed, else the highest observed node.
LikelihoodBreakdown exemplar_log_likelihood(const SuvModel& model, const Observation& observation);
LikelihoodBreakdown exemplar_log_likelihood(const SuvModel& model, const Exemplar& exemplar);

/// log P(V_G): part inclusion, uniform slot choice, -inf on a slot conflict,
/// conditioned on at least one part.
double viewlet_set_log_probability(const SuvModel& model, const std::vector<int>& viewlets);

// ---------------------------------------------------------------------------

struct Rendered {
  Image image;
  double offset_x = 0.0;  ///< added to exemplar coordinates to get canvas pixels
  double offset_y = 0.0;
};

/// Pastes `patch` resized to (extent_x, extent_y) with its corner at (x, y).
void paste_patch(Image& canvas, const Image& patch, double x, double y, double extent_x, double extent_y);

/// Renders onto a background canvas, growing it (and recording the offset)
/// when a window falls outside.
Rendered render_exemplar(const Exemplar& exemplar, const SuvModel& model, int width = 0, int height = 0,
                         float background = 0.5f);

}  // namespace suvm::gen
