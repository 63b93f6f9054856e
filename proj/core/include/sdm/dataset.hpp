#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sdm/representation.hpp"

namespace sdm {

/// One problem instance: the known point set, the camera, the hidden
/// translation and the binary target it produced.
struct SceneConfig {
  Intrinsics intrinsics;
  std::vector<Point3> points;     // the set the solver translates
  Translation2 theta_star;        // ground truth, scene units
  Grid target;                    // binary mask of render(points + theta_star)
  std::string id;
};

/// Controls for the synthetic scene generator. Each scene draws
/// `num_objects` in [min_objects, max_objects], splats a disc of cells
/// around every object's projection (membership exp(-d/sigma) >= tau) and
/// reconstructs one point per disc cell at the stored depth.
struct GenParams {
  int min_objects = 3;
  int max_objects = 12;
  double z_lo = 5.0;
  double z_hi = 80.0;
  double tau = 0.25;
  double sigma = 3.0;
  Translation2 theta_star{0.517, 0.303};
  Intrinsics intrinsics;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, int line)
      : std::runtime_error(msg + " (line " + std::to_string(line) + ")"), line(line) {}
  int line;
};

/// Splats discs around the active cells of `centers` (values are depths):
/// a cell joins a disc when exp(-d/sigma) >= tau, and overlapping discs
/// keep the smaller depth. Order-independent.
Grid draw_discs(const Grid& centers, double tau, double sigma);

/// One point per active cell, unprojected at the cell center (r+0.5, c+0.5)
/// at the stored depth. The resulting buffer is proper by construction.
std::vector<Point3> reconstruct_points(const Grid& e_prime, const Intrinsics& k);

/// Generates a full scene: sample object centers, render depths, splat
/// discs, reconstruct the point set, and render the translated binary
/// target. Deterministic in params.seed.
SceneConfig generate_config(const GenParams& params);

/// Shifts every active cell by an independent integer offset uniform on
/// [-n..n]^2, clipping to the border; collisions merge.
Grid add_noise(const Grid& target, int n, std::uint64_t seed);

void save_config(const SceneConfig& cfg, const std::filesystem::path& path);

/// Loads a config. If `warnings` is non-null, consistency findings that do
/// not prevent loading (e.g. a target that disagrees with re-rendering the
/// translated points) are appended there.
SceneConfig load_config(const std::filesystem::path& path,
                        std::vector<std::string>* warnings = nullptr);

}  // namespace sdm
