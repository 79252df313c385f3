#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

namespace coagfrag {

enum class GridKind { Geometric, Uniform };

/// Partition e_0 < e_1 < ... < e_N of (x_min, x_max] into N cells. The
/// representative size of cell i is its linear midpoint.
class SizeGrid {
 public:
  static SizeGrid from_edges(std::vector<double> edges);

  std::size_t size() const noexcept { return pivots_.size(); }
  std::span<const double> edges() const noexcept { return edges_; }
  std::span<const double> pivots() const noexcept { return pivots_; }
  std::span<const double> widths() const noexcept { return widths_; }
  double pivot(std::size_t i) const { return pivots_[i]; }
  double width(std::size_t i) const { return widths_[i]; }
  double lower(std::size_t i) const { return edges_[i]; }
  double upper(std::size_t i) const { return edges_[i + 1]; }
  double x_min() const noexcept { return edges_.front(); }
  double x_max() const noexcept { return edges_.back(); }

  bool operator==(const SizeGrid& other) const noexcept { return edges_ == other.edges_; }

 private:
  explicit SizeGrid(std::vector<double> edges);
  std::vector<double> edges_;
  std::vector<double> pivots_;
  std::vector<double> widths_;
};

using GridPtr = std::shared_ptr<const SizeGrid>;

GridPtr make_grid(double x_min, double x_max, std::size_t n_cells, GridKind kind);

/// Number of geometric cells giving the requested density per decade.
std::size_t cells_for_decades(double x_min, double x_max, double cells_per_decade);

/// Cell-averaged number density on a grid at one time.
struct State {
  GridPtr grid;
  std::vector<double> density;
  double time = 0.0;

  State() = default;
  explicit State(GridPtr g, double t = 0.0)
      : grid(std::move(g)), density(grid->size(), 0.0), time(t) {}
  State(GridPtr g, std::vector<double> f, double t = 0.0);

  std::size_t size() const noexcept { return density.size(); }
  /// Number of particles in cell i, f_i * width_i.
  double number(std::size_t i) const { return density[i] * grid->width(i); }
  bool is_nonnegative() const noexcept;
  bool is_finite() const noexcept;
};

struct MomentReport {
  std::map<double, double> moments;
  /// sum_i xbar_i |ln xbar_i| f_i width_i
  double log_mass = 0.0;

  /// Throws std::out_of_range when m was not requested.
  double at(double m) const;
};

double moment(const State& state, double m);
double log_mass(const State& state);
MomentReport moments(const State& state, std::span<const double> exponents);

using DensityFn = std::function<double(double)>;

class QuadratureFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cell averages (1/width_i) int_cell fin(x) dx by adaptive Gauss-Kronrod.
/// Known kinks of fin may be listed in `breaks` so cells are split there.
State project(const DensityFn& fin, const GridPtr& grid, double rel_tol = 1e-10,
              std::span<const double> breaks = {});

/// Rescales the state so that its discrete first moment equals `mass`.
State scale_to_mass(State state, double mass);

// Built-in initial profiles (unnormalized shapes).
DensityFn exponential_profile(double scale);
DensityFn smoothed_monodisperse_profile(double center, double width);
DensityFn power_law_cutoff_profile(double exponent, double cutoff);

/// Linear interpolation through (x, f) pairs, zero outside [x_0, x_last].
struct TabulatedProfile {
  std::vector<double> x;
  std::vector<double> f;
  double operator()(double size) const;
};

/// Two-column text (size density), strictly increasing sizes; '#' comments.
TabulatedProfile read_tabulated_profile(std::istream& in);
TabulatedProfile load_tabulated_profile(const std::filesystem::path& path);

/// Number-conserving transfer of a piecewise-constant density onto another
/// grid; cells outside the source range receive zero.
State transfer(const State& state, const GridPtr& target);

/// sum |f - g| x^w width / sum |g| x^w width, with x the cell pivot.
double relative_l1(const State& f, const State& g, double weight_exponent = 0.0);

}  // namespace coagfrag
