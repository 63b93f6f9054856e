#include "sdm/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sdm/format.hpp"
#include "sdm/rng.hpp"

namespace sdm {

void GenParams::validate() const {
  if (min_objects < 1 || max_objects < min_objects)
    throw std::invalid_argument("GenParams: need 1 <= min_objects <= max_objects");
  if (!(z_lo > 0.0) || !(z_hi >= z_lo))
    throw std::invalid_argument("GenParams: need 0 < z_lo <= z_hi");
  if (!(tau > 0.0) || !(tau < 1.0))
    throw std::invalid_argument("GenParams: need 0 < tau < 1");
  if (!(sigma > 0.0))
    throw std::invalid_argument("GenParams: need sigma > 0");
  intrinsics.validate();
}

Grid draw_discs(const Grid& centers, double tau, double sigma) {
  const int h = centers.height(), w = centers.width();
  Grid out(h, w);
  // Membership exp(-d/sigma) >= tau, i.e. d <= sigma*ln(1/tau).
  const double radius = sigma * std::log(1.0 / tau);
  const int reach = static_cast<int>(std::ceil(radius));
  for (int u = 0; u < h; ++u) {
    for (int v = 0; v < w; ++v) {
      const double depth = centers.at(u, v);
      if (depth == 0.0) continue;
      for (int du = -reach; du <= reach; ++du) {
        for (int dv = -reach; dv <= reach; ++dv) {
          const int uu = u + du, vv = v + dv;
          if (!out.in_bounds(uu, vv)) continue;
          const double d = std::sqrt(double(du) * du + double(dv) * dv);
          if (!(std::exp(-d / sigma) >= tau)) continue;
          double& cell = out.at(uu, vv);
          if (cell == 0.0 || cell > depth) cell = depth;
        }
      }
    }
  }
  return out;
}

std::vector<Point3> reconstruct_points(const Grid& e_prime, const Intrinsics& k) {
  std::vector<Point3> points;
  for (int r = 0; r < e_prime.height(); ++r) {
    for (int c = 0; c < e_prime.width(); ++c) {
      const double depth = e_prime.at(r, c);
      if (depth == 0.0) continue;
      points.push_back(unproject_at_depth(r + 0.5, c + 0.5, depth, k));
    }
  }
  return points;
}

SceneConfig generate_config(const GenParams& params) {
  params.validate();
  const Intrinsics& k = params.intrinsics;
  auto rng = make_rng(params.seed);
  std::uniform_int_distribution<int> object_count(params.min_objects, params.max_objects);
  std::uniform_real_distribution<double> row_dist(0.0, double(k.height));
  std::uniform_real_distribution<double> col_dist(0.0, double(k.width));
  std::uniform_real_distribution<double> depth_dist(params.z_lo, params.z_hi);

  const int m = object_count(rng);
  std::vector<Fragment> objects;
  objects.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    constexpr int kMaxTries = 100;
    bool placed = false;
    for (int tries = 0; tries < kMaxTries && !placed; ++tries) {
      const double z = depth_dist(rng);
      const Point3 center = unproject_at_depth(row_dist(rng), col_dist(rng), z, k);
      if (on_screen(floor_pos(project(center, k)), k)) {
        objects.push_back({center, z});
        placed = true;
      }
    }
    if (!placed)
      throw GenerationError("generate_config: could not place an object on-screen");
  }

  const Grid depth_centers = render(objects, k);
  const Grid splat = draw_discs(depth_centers, params.tau, params.sigma);

  SceneConfig cfg;
  cfg.intrinsics = k;
  cfg.points = reconstruct_points(splat, k);
  cfg.theta_star = params.theta_star;

  std::vector<Fragment> translated;
  translated.reserve(cfg.points.size());
  for (const Point3& p : cfg.points) translated.push_back({p + params.theta_star, 1.0});
  cfg.target = binary_mask(render(translated, k));

  char buf[32];
  std::snprintf(buf, sizeof buf, "cfg-%016llx",
                static_cast<unsigned long long>(params.seed));
  cfg.id = buf;
  return cfg;
}

Grid add_noise(const Grid& target, int n, std::uint64_t seed) {
  if (n < 0) throw std::invalid_argument("add_noise: noise level must be >= 0");
  if (n == 0) return target;
  Grid out(target.height(), target.width());
  auto rng = make_rng(seed);
  std::uniform_int_distribution<int> shift(-n, n);
  for (int r = 0; r < target.height(); ++r) {
    for (int c = 0; c < target.width(); ++c) {
      const double v = target.at(r, c);
      if (v == 0.0) continue;
      const int dr = shift(rng);
      const int dc = shift(rng);
      const int rr = std::clamp(r + dr, 0, target.height() - 1);
      const int cc = std::clamp(c + dc, 0, target.width() - 1);
      out.at(rr, cc) = std::max(out.at(rr, cc), v);
    }
  }
  return out;
}

namespace {

constexpr const char* kMagic = "SKYCFG1";

struct LineReader {
  std::istream& in;
  int line_no = 0;
  std::string line;

  bool next() {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty()) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_no); }
};

std::vector<std::string> tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream iss(s);
  std::string t;
  while (iss >> t) out.push_back(t);
  return out;
}

double parse_double(const std::string& t, const LineReader& r) {
  double v{};
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size())
    r.fail("expected a number, got '" + t + "'");
  return v;
}

long parse_int(const std::string& t, const LineReader& r) {
  long v{};
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size())
    r.fail("expected an integer, got '" + t + "'");
  return v;
}

}  // namespace

void save_config(const SceneConfig& cfg, const std::filesystem::path& path) {
  const Grid& mask = cfg.target;
  for (double v : mask.cells())
    if (v != 0.0 && v != 1.0)
      throw std::invalid_argument("save_config: target must be a binary mask");
  if (cfg.id.find('\n') != std::string::npos)
    throw std::invalid_argument("save_config: id must not contain newlines");

  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_config: cannot open " + path.string());
  out << kMagic << "\n";
  out << "id " << cfg.id << "\n";
  out << "screen " << cfg.intrinsics.height << " " << cfg.intrinsics.width << "\n";
  out << "intrinsics " << format_double(cfg.intrinsics.fu) << " " << format_double(cfg.intrinsics.fv)
      << " " << format_double(cfg.intrinsics.ou) << " " << format_double(cfg.intrinsics.ov) << "\n";
  out << "theta " << format_double(cfg.theta_star.x) << " " << format_double(cfg.theta_star.y) << "\n";
  out << "points " << cfg.points.size() << "\n";
  for (const Point3& p : cfg.points)
    out << "P " << format_double(p.x) << " " << format_double(p.y) << " " << format_double(p.z) << "\n";
  out << "mask\n";
  // Each row: alternating run lengths starting with a zero-run.
  for (int r = 0; r < mask.height(); ++r) {
    out << "R";
    int c = 0;
    double run_value = 0.0;
    while (c < mask.width()) {
      int len = 0;
      while (c < mask.width() && mask.at(r, c) == run_value) {
        ++len;
        ++c;
      }
      out << " " << len;
      run_value = (run_value == 0.0) ? 1.0 : 0.0;
    }
    out << "\n";
  }
  out << "end\n";
  if (!out) throw std::runtime_error("save_config: write failed for " + path.string());
}

SceneConfig load_config(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_config: cannot open " + path.string());
  LineReader r{in};

  if (!r.next() || r.line != kMagic) r.fail("missing SKYCFG1 magic");

  SceneConfig cfg;
  if (!r.next() || !r.line.starts_with("id ")) r.fail("expected 'id'");
  cfg.id = r.line.substr(3);

  if (!r.next()) r.fail("expected 'screen'");
  auto t = tokens(r.line);
  if (t.size() != 3 || t[0] != "screen") r.fail("expected 'screen H W'");
  cfg.intrinsics.height = static_cast<int>(parse_int(t[1], r));
  cfg.intrinsics.width = static_cast<int>(parse_int(t[2], r));

  if (!r.next()) r.fail("expected 'intrinsics'");
  t = tokens(r.line);
  if (t.size() != 5 || t[0] != "intrinsics") r.fail("expected 'intrinsics fu fv ou ov'");
  cfg.intrinsics.fu = parse_double(t[1], r);
  cfg.intrinsics.fv = parse_double(t[2], r);
  cfg.intrinsics.ou = parse_double(t[3], r);
  cfg.intrinsics.ov = parse_double(t[4], r);
  try {
    cfg.intrinsics.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }

  if (!r.next()) r.fail("expected 'theta'");
  t = tokens(r.line);
  if (t.size() != 3 || t[0] != "theta") r.fail("expected 'theta a b'");
  cfg.theta_star.x = parse_double(t[1], r);
  cfg.theta_star.y = parse_double(t[2], r);

  if (!r.next()) r.fail("expected 'points'");
  t = tokens(r.line);
  if (t.size() != 2 || t[0] != "points") r.fail("expected 'points N'");
  const long n_points = parse_int(t[1], r);
  if (n_points < 0) r.fail("negative point count");

  cfg.points.reserve(static_cast<std::size_t>(n_points));
  for (long i = 0; i < n_points; ++i) {
    if (!r.next()) r.fail("unexpected end of file in point list");
    t = tokens(r.line);
    if (t.size() != 4 || t[0] != "P") r.fail("expected 'P x y z'");
    Point3 p{parse_double(t[1], r), parse_double(t[2], r), parse_double(t[3], r)};
    if (!(p.z > 0.0)) r.fail("point depth must be positive");
    cfg.points.push_back(p);
  }

  if (!r.next() || r.line != "mask") r.fail("expected 'mask'");
  cfg.target = Grid(cfg.intrinsics.height, cfg.intrinsics.width);
  for (int row = 0; row < cfg.intrinsics.height; ++row) {
    if (!r.next()) r.fail("unexpected end of file in mask rows");
    t = tokens(r.line);
    if (t.empty() || t[0] != "R") r.fail("expected a mask row");
    int col = 0;
    double run_value = 0.0;
    for (std::size_t i = 1; i < t.size(); ++i) {
      const long len = parse_int(t[i], r);
      if (len < 0 || col + len > cfg.intrinsics.width) r.fail("mask row exceeds declared width");
      for (long j = 0; j < len; ++j) cfg.target.at(row, col++) = run_value;
      run_value = (run_value == 0.0) ? 1.0 : 0.0;
    }
    if (col != cfg.intrinsics.width) r.fail("mask row shorter than declared width");
  }
  if (!r.next() || r.line != "end") r.fail("expected 'end'");

  if (warnings) {
    std::vector<Fragment> translated;
    translated.reserve(cfg.points.size());
    for (const Point3& p : cfg.points) {
      if (!on_screen(floor_pos(project(p, cfg.intrinsics)), cfg.intrinsics))
        warnings->push_back(cfg.id + ": point projects off-screen");
      translated.push_back({p + cfg.theta_star, 1.0});
    }
    if (binary_mask(render(translated, cfg.intrinsics)) != cfg.target)
      warnings->push_back(cfg.id + ": target mask disagrees with re-rendering the translated points");
  }
  return cfg;
}

}  // namespace sdm
