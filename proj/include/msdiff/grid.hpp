#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "msdiff/errors.hpp"

namespace msdiff {

using Point = std::array<double, 3>;

/// Uniform cell-centred grid on a periodic box of dimension 1 to 3.
///
/// Cells are stored x-fastest: index = i + nx (j + ny k). Axes beyond dim()
/// have one cell so loops can run over all three unconditionally.
class PeriodicGrid {
 public:
  PeriodicGrid(int dim, std::array<int, 3> cells, std::array<double, 3> lengths = {1.0, 1.0, 1.0});

  static PeriodicGrid line(int cells, double length = 1.0);
  static PeriodicGrid square(int cells, double length = 1.0);
  static PeriodicGrid cube(int cells, double length = 1.0);

  int dim() const { return dim_; }
  int cells(int axis) const { return cells_[axis]; }
  double length(int axis) const { return lengths_[axis]; }
  double spacing(int axis) const { return h_[axis]; }
  double min_spacing() const;
  std::size_t size() const { return size_; }
  double cell_volume() const { return volume_; }
  double measure() const { return volume_ * static_cast<double>(size_); }

  std::size_t index(int i, int j = 0, int k = 0) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(cells_[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(cells_[1]) * k);
  }
  std::array<int, 3> coords(std::size_t idx) const;
  // Neighbour `offset` cells away along `axis`, wrapped periodically.
  std::size_t neighbor(std::size_t idx, int axis, int offset) const;
  Point center(std::size_t idx) const;

  // Same cell counts and lengths.
  bool operator==(const PeriodicGrid& other) const;
  bool operator!=(const PeriodicGrid& other) const { return !(*this == other); }

 private:
  int dim_;
  std::array<int, 3> cells_;
  std::array<double, 3> lengths_;
  std::array<double, 3> h_;
  std::array<std::size_t, 3> stride_;
  std::size_t size_;
  double volume_;
};

using Field = std::vector<double>;

// f(x, t) on the periodic box.
using SpaceTimeFunction = std::function<double(const Point& x, double t)>;

// dim() components, each a cell field.
struct VectorField {
  std::vector<Field> components;

  int dim() const { return static_cast<int>(components.size()); }
};

// Face-normal values: component a at index idx lives on the face between
// idx and neighbor(idx, a, +1).
using FaceField = VectorField;

Field sample(const PeriodicGrid& grid, const std::function<double(const Point&)>& fn);
VectorField zero_vector_field(const PeriodicGrid& grid);

// Second-order central difference with periodic wrap.
VectorField gradient(const Field& field, const PeriodicGrid& grid);

// Divergence of a cell-centred vector field through face averages
// (F_k + F_{k+1})/2. Telescopes to zero and is the negative adjoint of gradient().
Field divergence(const VectorField& field, const PeriodicGrid& grid);

// Divergence of face-normal fluxes; telescopes to zero.
Field face_divergence(const FaceField& flux, const PeriodicGrid& grid);

// Midpoint quadrature with pairwise summation.
double integrate(const Field& field, const PeriodicGrid& grid);
double integrate(std::span<const double> values, const PeriodicGrid& grid);

double inner_product(const Field& a, const Field& b, const PeriodicGrid& grid);
double inner_product(const VectorField& a, const VectorField& b, const PeriodicGrid& grid);

// Shift every field by whole cells along each axis (periodic translation).
Field translate(const Field& field, const PeriodicGrid& grid, std::array<int, 3> shift);

/// Species concentrations on a periodic grid at one time.
struct ConcentrationState {
  PeriodicGrid grid;
  std::vector<Field> c;
  double time = 0.0;

  int species() const { return static_cast<int>(c.size()); }
  double mass(int i) const { return integrate(c[i], grid); }
  std::vector<double> masses() const;
  // max over cells of |sum_i c_i - 1|
  double simplex_defect() const;
  double min_value() const;
  // Throws InvalidComposition unless 0 <= c_i <= 1 and simplex_defect <= tol.
  void validate(double tol = 1e-12) const;
};

void require_same_grid(const ConcentrationState& a, const ConcentrationState& b);

/// Snapshot serialization.
///
/// Binary layout, little-endian, no padding:
///   u32 dim | u32 cells[dim] | u32 n | f64 time | f64 data[n * cells]
/// with species-major payload, each species field x-fastest. The reader
/// takes the domain lengths separately (default: unit period).
void write_binary(std::ostream& out, const ConcentrationState& state);
ConcentrationState read_binary(std::istream& in, std::array<double, 3> lengths = {1.0, 1.0, 1.0});

// 1-D only: header "x,c_1,...,c_n", one row per cell.
void write_csv(std::ostream& out, const ConcentrationState& state);

}  // namespace msdiff
