#include "caes/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace caes {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Direction d) {
  switch (d) {
    case Direction::XtoY: return "XtoY";
    case Direction::YtoX: return "YtoX";
    default: return "Unlabeled";
  }
}

Direction direction_from_string(const std::string& s) {
  if (s == "XtoY") return Direction::XtoY;
  if (s == "YtoX") return Direction::YtoX;
  if (s == "Unlabeled") return Direction::Unlabeled;
  throw Error("unknown direction: " + s);
}

SamplePairSet SamplePairSet::swapped() const {
  SamplePairSet out;
  out.xs = ys;
  out.ys = xs;
  out.weight = weight;
  out.id = id.empty() ? "" : id + "-rev";
  switch (direction) {
    case Direction::XtoY: out.direction = Direction::YtoX; break;
    case Direction::YtoX: out.direction = Direction::XtoY; break;
    default: out.direction = Direction::Unlabeled; break;
  }
  return out;
}

void validate_pair(const SamplePairSet& p) {
  if (p.xs.size() != p.ys.size())
    throw Error("pair " + p.id + ": xs/ys length mismatch");
  if (p.xs.size() < 2) throw Error("pair " + p.id + ": needs at least 2 samples");
  for (double v : p.xs)
    if (!std::isfinite(v)) throw Error("pair " + p.id + ": non-finite x value");
  for (double v : p.ys)
    if (!std::isfinite(v)) throw Error("pair " + p.id + ": non-finite y value");
  if (!(p.weight >= 0.0)) throw Error("pair " + p.id + ": negative weight");
}

void validate_config(const SyntheticPairConfig& cfg) {
  auto check_int = [](const IntRange& r, int min_lo, const char* name) {
    if (r.lo < min_lo || r.hi < r.lo)
      throw Error(std::string("SyntheticPairConfig.") + name + ": empty or invalid range");
  };
  check_int(cfg.n_samples, 2, "n_samples");
  check_int(cfg.gaussian_components, 1, "gaussian_components");
  check_int(cfg.mechanism_knots, 2, "mechanism_knots");
  if (cfg.noise_scale.lo < 0.0 || cfg.noise_scale.hi < cfg.noise_scale.lo)
    throw Error("SyntheticPairConfig.noise_scale: empty or invalid range");
}

namespace {

struct Moments {
  double mean;
  double std;  // population convention
};

Moments moments(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  return {mean, std::sqrt(var)};
}

void standardize_column(std::vector<double>& v, const char* which, const std::string& id) {
  Moments m = moments(v);
  if (m.std == 0.0)
    throw ZeroVarianceError("pair " + id + ": constant " + which + " marginal");
  for (double& x : v) x = (x - m.mean) / m.std;
}

}  // namespace

SamplePairSet standardize_pair(const SamplePairSet& p) {
  validate_pair(p);
  SamplePairSet out = p;
  standardize_column(out.xs, "x", p.id);
  standardize_column(out.ys, "y", p.id);
  return out;
}

namespace {

// Piecewise cubic Hermite interpolation (Catmull-Rom tangents) through the
// knots; linear when only two knots are drawn.
class SplineMechanism {
 public:
  SplineMechanism(std::vector<double> knot_x, std::vector<double> knot_y)
      : kx_(std::move(knot_x)), ky_(std::move(knot_y)) {}

  double operator()(double x) const {
    const std::size_t n = kx_.size();
    if (x <= kx_.front()) return extrapolate(0, x);
    if (x >= kx_.back()) return extrapolate(n - 2, x);
    std::size_t i = static_cast<std::size_t>(
                        std::upper_bound(kx_.begin(), kx_.end(), x) - kx_.begin()) - 1;
    const double h = kx_[i + 1] - kx_[i];
    const double t = (x - kx_[i]) / h;
    const double m0 = tangent(i) * h;
    const double m1 = tangent(i + 1) * h;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * ky_[i] + (t3 - 2 * t2 + t) * m0 +
           (-2 * t3 + 3 * t2) * ky_[i + 1] + (t3 - t2) * m1;
  }

 private:
  double slope(std::size_t i) const { return (ky_[i + 1] - ky_[i]) / (kx_[i + 1] - kx_[i]); }
  double tangent(std::size_t i) const {
    const std::size_t n = kx_.size();
    if (i == 0) return slope(0);
    if (i == n - 1) return slope(n - 2);
    return 0.5 * (slope(i - 1) + slope(i));
  }
  double extrapolate(std::size_t seg, double x) const {
    return ky_[seg] + slope(seg) * (x - kx_[seg]);
  }

  std::vector<double> kx_, ky_;
};

}  // namespace

SamplePairSet generate_anm_pair(const SyntheticPairConfig& cfg, std::mt19937_64& rng) {
  validate_config(cfg);

  auto draw_int = [&rng](const IntRange& r) {
    return std::uniform_int_distribution<int>(r.lo, r.hi)(rng);
  };
  auto draw_real = [&rng](const RealRange& r) {
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
  };

  for (int attempt = 0; attempt < 10; ++attempt) {
    const int n = draw_int(cfg.n_samples);
    const int k_comp = draw_int(cfg.gaussian_components);
    const int k_knots = draw_int(cfg.mechanism_knots);
    const double noise = draw_real(cfg.noise_scale);

    // Cause: mixture of Gaussians with random means/scales/weights.
    std::vector<double> means(k_comp), sds(k_comp), wts(k_comp);
    double wsum = 0.0;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    for (int c = 0; c < k_comp; ++c) {
      means[c] = 2.0 * stdnorm(rng);
      sds[c] = 0.5 + 1.5 * u01(rng);
      wts[c] = 0.1 + u01(rng);
      wsum += wts[c];
    }
    for (double& w : wts) w /= wsum;

    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) {
      double pick = u01(rng);
      int c = 0;
      while (c + 1 < k_comp && pick > wts[c]) pick -= wts[c], ++c;
      xs[i] = means[c] + sds[c] * stdnorm(rng);
    }

    const auto [x_lo, x_hi] = std::minmax_element(xs.begin(), xs.end());
    if (*x_hi - *x_lo <= 0.0) continue;  // all draws collapsed, redraw

    // Mechanism: spline through evenly spaced knots with random heights.
    std::vector<double> knot_x(k_knots), knot_y(k_knots);
    for (int j = 0; j < k_knots; ++j) {
      knot_x[j] = *x_lo + (*x_hi - *x_lo) * static_cast<double>(j) / (k_knots - 1);
      knot_y[j] = stdnorm(rng);
    }
    SplineMechanism mech(knot_x, knot_y);

    SamplePairSet p;
    p.xs = xs;
    p.ys.resize(n);
    for (int i = 0; i < n; ++i) p.ys[i] = mech(xs[i]) + noise * stdnorm(rng);
    p.direction = Direction::XtoY;

    try {
      return standardize_pair(p);
    } catch (const ZeroVarianceError&) {
      continue;  // constant mechanism with zero noise, redraw
    }
  }
  throw GenerationFailure("generate_anm_pair: 10 consecutive degenerate draws");
}

std::vector<SamplePairSet> make_training_corpus(const SyntheticPairConfig& cfg, int n_pairs) {
  if (n_pairs < 2 || n_pairs % 2 != 0)
    throw Error("make_training_corpus: n_pairs must be even and >= 2");
  std::vector<SamplePairSet> corpus;
  corpus.reserve(static_cast<std::size_t>(n_pairs));
  for (int i = 0; i < n_pairs / 2; ++i) {
    std::mt19937_64 rng(cfg.rng_seed ^ static_cast<std::uint64_t>(i));
    SamplePairSet p = generate_anm_pair(cfg, rng);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "syn-%06d", i);
    p.id = buf;
    SamplePairSet twin = p.swapped();
    corpus.push_back(std::move(p));
    corpus.push_back(std::move(twin));
  }
  return corpus;
}

namespace {

std::vector<std::vector<double>> read_numeric_table(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open " + file.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::vector<double> row;
    double v;
    while (ss >> v) row.push_back(v);
    if (!ss.eof()) {
      std::string rest;
      ss.clear();
      ss >> rest;
      if (!rest.empty())
        throw MalformedRowError(file.filename().string(), lineno, "non-numeric token '" + rest + "'");
    }
    if (row.empty()) continue;  // blank line
    if (!rows.empty() && rows.front().size() != row.size())
      throw MalformedRowError(file.filename().string(), lineno, "inconsistent column count");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::vector<SamplePairSet> load_tubingen(const fs::path& dir, TubingenLoadLog* log) {
  const fs::path meta_path = dir / "pairmeta.txt";
  if (!fs::exists(meta_path))
    throw MissingMetaError("no pairmeta.txt in " + dir.string());

  std::ifstream meta(meta_path);
  std::vector<SamplePairSet> out;
  std::string line;
  int lineno = 0;
  while (std::getline(meta, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::istringstream ss(line);
    std::string pair_id;
    int cf, cl, ef, el;
    double weight;
    if (!(ss >> pair_id >> cf >> cl >> ef >> el >> weight))
      throw MalformedRowError("pairmeta.txt", lineno, "expected: id cf cl ef el weight");

    if (cf != cl || ef != el) {
      if (log) log->skipped_multivariate.push_back(pair_id);
      continue;
    }

    const fs::path data_path = dir / ("pair" + pair_id + ".txt");
    if (!fs::exists(data_path)) {
      if (log) log->notices.push_back("missing data file for pair " + pair_id);
      continue;
    }
    auto table = read_numeric_table(data_path);
    if (table.size() < 2)
      throw MalformedRowError(data_path.filename().string(), 1, "fewer than 2 samples");
    const int ncols = static_cast<int>(table.front().size());
    if (cf < 1 || cf > ncols || ef < 1 || ef > ncols)
      throw MalformedRowError("pairmeta.txt", lineno, "column index out of range");

    SamplePairSet p;
    p.id = pair_id;
    p.direction = Direction::XtoY;
    p.weight = weight;
    p.xs.reserve(table.size());
    p.ys.reserve(table.size());
    for (const auto& row : table) {
      p.xs.push_back(row[static_cast<std::size_t>(cf - 1)]);
      p.ys.push_back(row[static_cast<std::size_t>(ef - 1)]);
    }
    validate_pair(p);
    out.push_back(std::move(p));
  }
  return out;
}

void save_pairs_jsonl(const fs::path& path, const std::vector<SamplePairSet>& pairs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : pairs) {
    json j{{"id", p.id},
           {"direction", to_string(p.direction)},
           {"weight", p.weight},
           {"xs", p.xs},
           {"ys", p.ys}};
    out << j.dump() << '\n';
  }
}

std::vector<SamplePairSet> load_pairs_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<SamplePairSet> pairs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw MalformedRowError(path.filename().string(), lineno, e.what());
    }
    SamplePairSet p;
    p.id = j.at("id").get<std::string>();
    p.direction = direction_from_string(j.at("direction").get<std::string>());
    p.weight = j.at("weight").get<double>();
    p.xs = j.at("xs").get<std::vector<double>>();
    p.ys = j.at("ys").get<std::vector<double>>();
    validate_pair(p);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace caes
