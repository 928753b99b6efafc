#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "caes/errors.hpp"

namespace caes {

enum class Direction { XtoY, YtoX, Unlabeled };

std::string to_string(Direction d);
Direction direction_from_string(const std::string& s);

// A finite set of scalar (x, y) observations with an optional
// causal-direction label. The unit of input for the NCC.
struct SamplePairSet {
  std::vector<double> xs;
  std::vector<double> ys;
  Direction direction = Direction::Unlabeled;
  double weight = 1.0;
  std::string id;

  std::size_t size() const { return xs.size(); }
  // Swap-twin: xs/ys exchanged, direction reversed.
  SamplePairSet swapped() const;
};

// Throws Error if the pair violates its invariants (n >= 2, finite values,
// matching lengths, non-negative weight).
void validate_pair(const SamplePairSet& p);

struct IntRange {
  int lo = 0;
  int hi = 0;
};

struct RealRange {
  double lo = 0.0;
  double hi = 0.0;
};

// Knobs for the additive-noise-model pair generator. Defaults reproduce a
// corpus on which a small set classifier separates the two directions well:
// Gaussian-mixture causes, random-spline mechanisms, scaled Gaussian noise.
struct SyntheticPairConfig {
  IntRange n_samples{100, 500};
  IntRange gaussian_components{1, 5};
  IntRange mechanism_knots{4, 10};
  RealRange noise_scale{0.0, 0.75};
  std::uint64_t rng_seed = 0;
};

void validate_config(const SyntheticPairConfig& cfg);

// Returns a copy of p with each marginal shifted/scaled to empirical mean 0
// and population variance 1. Throws ZeroVarianceError on a constant marginal.
SamplePairSet standardize_pair(const SamplePairSet& p);

// One cause-effect pair from the additive-noise model:
//   x ~ random Gaussian mixture,  y = spline(x) + v * e,  e ~ N(0,1).
// Result is standardized and labeled XtoY. Degenerate draws are retried
// internally; after 10 failures throws GenerationFailure.
SamplePairSet generate_anm_pair(const SyntheticPairConfig& cfg, std::mt19937_64& rng);

// n_pairs/2 generated pairs plus their swap-twins, so the corpus is exactly
// direction-balanced. n_pairs must be even and >= 2. Pair i uses the derived
// seed cfg.rng_seed ^ i, so generation order is parallel-safe.
std::vector<SamplePairSet> make_training_corpus(const SyntheticPairConfig& cfg, int n_pairs);

struct TubingenLoadLog {
  std::vector<std::string> skipped_multivariate;  // pair ids skipped
  std::vector<std::string> notices;
};

// Loads the Tuebingen cause-effect benchmark directory: pairNNNN.txt data
// files plus pairmeta.txt with 1-based cause/effect column ranges and a pair
// weight. Multivariate pairs are skipped with a logged notice.
std::vector<SamplePairSet> load_tubingen(const std::filesystem::path& dir,
                                         TubingenLoadLog* log = nullptr);

// One JSON object per line: {"id","direction","weight","xs":[...],"ys":[...]}.
void save_pairs_jsonl(const std::filesystem::path& path,
                      const std::vector<SamplePairSet>& pairs);
std::vector<SamplePairSet> load_pairs_jsonl(const std::filesystem::path& path);

}  // namespace caes
