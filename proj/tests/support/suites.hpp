#pragma once

// Seeded checks shared by the unit tests and the acceptance binary. Each
// returns the worst error observed for one seed.

#include <cstdint>
#include <string>
#include <vector>

#include "mesoforge/aggregate.hpp"
#include "mesoforge/model.hpp"

namespace suites {

// Forward oracles: max absolute difference from the naive-loop reference.
double conv_oracle_error(std::uint64_t seed, int dilation);
double conv_direct_oracle_error(std::uint64_t seed, int dilation);
double pool_oracle_error(std::uint64_t seed);  // values and argmax; 0 when exact
double batchnorm_oracle_error(std::uint64_t seed);

struct GradCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;       // coordinates whose step straddles a kink
  double forward_error = 0.0;    // scores versus the double-precision reference
};

/// Checks every primitive's float backward pass against central differences
/// (step 1e-6) of the double-precision reference ops.
std::vector<GradCheck> primitive_gradient_checks(std::uint64_t seed);

/// Whole-network check on a batch of 4 inputs of 16 x 16 in Train mode. The
/// analytic float gradients are compared with central differences of the
/// double-precision reference network on 64 input entries and `per_param`
/// entries of every trainable tensor. Coordinates whose one-sided slopes
/// disagree sit on a ReLU or pooling switch and are skipped and counted.
GradCheck model_gradient_check(mesoforge::Arch arch, std::uint64_t seed, int per_param = 16);

/// Largest |w - oracle| over `steps` ADAM updates of random gradients, with
/// the scalar oracle rounding weights to float between steps as the store
/// does. Also infinite if a non-trainable value moved.
double adam_oracle_error(std::uint64_t seed, int steps = 10);

/// Random score sets of 2 to 10 points with ties and the endpoints 0 and 1.
/// Counts disagreements of roc_curve and roc_auc with brute-force counting
/// over an independently built threshold list; 0 means exact agreement.
int roc_oracle_mismatches(std::uint64_t seed);

/// |roc_auc - Mann-Whitney| on 200 scores drawn from a coarse grid (ties).
double auc_mann_whitney_error(std::uint64_t seed);

/// Frame scores of one video with its label.
struct ScoredVideo {
  int label = 0;
  std::vector<mesoforge::FrameScore> frames;
};

struct AggregateAccuracy {
  double frame = 0.0;  // fraction of frames on the correct side of 0.5
  double video = 0.0;  // fraction of all-frame verdicts that are correct
};

AggregateAccuracy aggregate_accuracy(const std::vector<ScoredVideo>& videos);

/// Replaces the score of a `fraction` of all frames, chosen uniformly, with
/// a uniform draw from the open unit interval.
std::vector<ScoredVideo> jitter_scores(std::vector<ScoredVideo> videos, double fraction,
                                       std::uint64_t seed);

}  // namespace suites
