#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "caes/pairs.hpp"

using namespace caes;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("caes_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("standardize_pair matches direct mean/std computation") {
  SamplePairSet p;
  p.xs = {1, 2, 3};
  p.ys = {2, 4, 6};
  const SamplePairSet s = standardize_pair(p);
  CHECK(s.xs[0] == doctest::Approx(-1.2247448).epsilon(1e-6));
  CHECK(s.xs[1] == doctest::Approx(0.0));
  CHECK(s.xs[2] == doctest::Approx(1.2247448).epsilon(1e-6));
  CHECK(s.ys[0] == doctest::Approx(-1.2247448).epsilon(1e-6));
  CHECK(s.ys[2] == doctest::Approx(1.2247448).epsilon(1e-6));
}

TEST_CASE("standardize_pair is idempotent within 1e-12") {
  SamplePairSet p;
  p.xs = {0.4, -1.3, 2.2, 0.9, -0.5};
  p.ys = {1.0, 0.1, -2.0, 0.6, 1.4};
  const SamplePairSet once = standardize_pair(p);
  const SamplePairSet twice = standardize_pair(once);
  for (std::size_t i = 0; i < once.xs.size(); ++i) {
    CHECK(std::abs(once.xs[i] - twice.xs[i]) < 1e-12);
    CHECK(std::abs(once.ys[i] - twice.ys[i]) < 1e-12);
  }
}

TEST_CASE("standardize_pair rejects constant marginals") {
  SamplePairSet p;
  p.xs = {5, 5, 5};
  p.ys = {1, 2, 3};
  CHECK_THROWS_AS(standardize_pair(p), ZeroVarianceError);
}

TEST_CASE("standardize_pair preserves direction, weight and id") {
  SamplePairSet p;
  p.xs = {1, 2, 3};
  p.ys = {3, 1, 2};
  p.direction = Direction::YtoX;
  p.weight = 0.25;
  p.id = "p7";
  const SamplePairSet s = standardize_pair(p);
  CHECK(s.direction == Direction::YtoX);
  CHECK(s.weight == 0.25);
  CHECK(s.id == "p7");
}

TEST_CASE("generate_anm_pair: zero noise makes y a function of x") {
  SyntheticPairConfig cfg;
  cfg.noise_scale = {0.0, 0.0};
  cfg.mechanism_knots = {2, 2};
  std::mt19937_64 rng(11);
  const SamplePairSet p = generate_anm_pair(cfg, rng);
  // Equal x values must map to equal y values.
  for (std::size_t i = 0; i < p.xs.size(); ++i)
    for (std::size_t j = i + 1; j < p.xs.size(); ++j)
      if (p.xs[i] == p.xs[j]) CHECK(p.ys[i] == p.ys[j]);
  CHECK(p.direction == Direction::XtoY);
}

TEST_CASE("generate_anm_pair is deterministic given the seed") {
  SyntheticPairConfig cfg;
  cfg.rng_seed = 7;
  std::mt19937_64 rng_a(cfg.rng_seed), rng_b(cfg.rng_seed);
  const SamplePairSet a = generate_anm_pair(cfg, rng_a);
  const SamplePairSet b = generate_anm_pair(cfg, rng_b);
  REQUIRE(a.xs.size() == b.xs.size());
  for (std::size_t i = 0; i < a.xs.size(); ++i) {
    CHECK(a.xs[i] == b.xs[i]);
    CHECK(a.ys[i] == b.ys[i]);
  }
}

TEST_CASE("generated pairs are standardized and labeled XtoY") {
  SyntheticPairConfig cfg;
  for (int i = 0; i < 50; ++i) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(i));
    const SamplePairSet p = generate_anm_pair(cfg, rng);
    CHECK(p.direction == Direction::XtoY);
    double mean = 0;
    for (double x : p.xs) mean += x;
    CHECK(std::abs(mean / static_cast<double>(p.xs.size())) < 1e-9);
  }
}

TEST_CASE("make_training_corpus is exactly direction-balanced") {
  SyntheticPairConfig cfg;
  cfg.rng_seed = 3;
  const auto corpus = make_training_corpus(cfg, 10);
  REQUIRE(corpus.size() == 10);
  int fwd = 0, rev = 0;
  for (const auto& p : corpus) {
    if (p.direction == Direction::XtoY) ++fwd;
    if (p.direction == Direction::YtoX) ++rev;
  }
  CHECK(fwd == 5);
  CHECK(rev == 5);
}

TEST_CASE("swap-twin mirrors xs and ys elementwise") {
  SyntheticPairConfig cfg;
  const auto corpus = make_training_corpus(cfg, 4);
  for (std::size_t i = 0; i + 1 < corpus.size(); i += 2) {
    CHECK(corpus[i].xs == corpus[i + 1].ys);
    CHECK(corpus[i].ys == corpus[i + 1].xs);
  }
}

TEST_CASE("make_training_corpus rejects odd pair counts") {
  SyntheticPairConfig cfg;
  CHECK_THROWS_AS(make_training_corpus(cfg, 3), Error);
}

TEST_CASE("load_tubingen parses the documented directory format") {
  const fs::path dir = temp_dir("tubingen");
  {
    std::ofstream meta(dir / "pairmeta.txt");
    meta << "0001 1 1 2 2 1.0\n";
    meta << "0002 1 2 3 3 0.5\n";  // multivariate cause, must be skipped
    meta << "0003 2 2 1 1 0.5\n";
  }
  {
    std::ofstream f(dir / "pair0001.txt");
    for (int i = 0; i < 349; ++i) f << i << " " << 2 * i + 1 << "\n";
  }
  {
    std::ofstream f(dir / "pair0003.txt");
    f << "1 10\n2 20\n3 31\n";
  }

  TubingenLoadLog log;
  const auto pairs = load_tubingen(dir, &log);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].id == "0001");
  CHECK(pairs[0].xs.size() == 349);
  CHECK(pairs[0].direction == Direction::XtoY);
  CHECK(pairs[0].weight == 1.0);
  // cause column 2, effect column 1
  CHECK(pairs[1].xs == std::vector<double>{10, 20, 31});
  CHECK(pairs[1].ys == std::vector<double>{1, 2, 3});
  CHECK(log.skipped_multivariate == std::vector<std::string>{"0002"});
  fs::remove_all(dir);
}

TEST_CASE("load_tubingen reports missing metadata and malformed rows") {
  const fs::path dir = temp_dir("tubingen_bad");
  CHECK_THROWS_AS(load_tubingen(dir), MissingMetaError);

  std::ofstream(dir / "pairmeta.txt") << "0001 1 1 2 2 1.0\n";
  std::ofstream(dir / "pair0001.txt") << "1 2\n3 oops\n";
  CHECK_THROWS_AS(load_tubingen(dir), MalformedRowError);
  fs::remove_all(dir);
}

TEST_CASE("jsonl round-trip preserves pairs") {
  SyntheticPairConfig cfg;
  cfg.rng_seed = 17;
  const auto corpus = make_training_corpus(cfg, 6);
  const fs::path path = temp_dir("jsonl") / "pairs.jsonl";
  save_pairs_jsonl(path, corpus);
  const auto loaded = load_pairs_jsonl(path);
  REQUIRE(loaded.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(loaded[i].id == corpus[i].id);
    CHECK(loaded[i].direction == corpus[i].direction);
    CHECK(loaded[i].xs == corpus[i].xs);
    CHECK(loaded[i].ys == corpus[i].ys);
  }
  fs::remove_all(path.parent_path());
}
