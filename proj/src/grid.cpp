#include "msdiff/grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

#include "msdiff/numerics.hpp"

namespace msdiff {

PeriodicGrid::PeriodicGrid(int dim, std::array<int, 3> cells, std::array<double, 3> lengths)
    : dim_(dim), cells_(cells), lengths_(lengths) {
  if (dim < 1 || dim > 3) throw DimensionMismatch("grid dimension must be 1, 2 or 3");
  for (int a = dim; a < 3; ++a) {
    cells_[a] = 1;
    lengths_[a] = 1.0;
  }
  size_ = 1;
  volume_ = 1.0;
  for (int a = 0; a < 3; ++a) {
    if (cells_[a] < 1) throw DimensionMismatch("cell count must be positive");
    if (!(lengths_[a] > 0.0)) throw DimensionMismatch("domain length must be positive");
    h_[a] = lengths_[a] / cells_[a];
    stride_[a] = size_;
    size_ *= static_cast<std::size_t>(cells_[a]);
    if (a < dim_) volume_ *= h_[a];
  }
}

PeriodicGrid PeriodicGrid::line(int cells, double length) {
  return PeriodicGrid(1, {cells, 1, 1}, {length, 1.0, 1.0});
}

PeriodicGrid PeriodicGrid::square(int cells, double length) {
  return PeriodicGrid(2, {cells, cells, 1}, {length, length, 1.0});
}

PeriodicGrid PeriodicGrid::cube(int cells, double length) {
  return PeriodicGrid(3, {cells, cells, cells}, {length, length, length});
}

double PeriodicGrid::min_spacing() const {
  double h = h_[0];
  for (int a = 1; a < dim_; ++a) h = std::min(h, h_[a]);
  return h;
}

std::array<int, 3> PeriodicGrid::coords(std::size_t idx) const {
  std::array<int, 3> ijk{};
  ijk[0] = static_cast<int>(idx % cells_[0]);
  idx /= cells_[0];
  ijk[1] = static_cast<int>(idx % cells_[1]);
  ijk[2] = static_cast<int>(idx / cells_[1]);
  return ijk;
}

std::size_t PeriodicGrid::neighbor(std::size_t idx, int axis, int offset) const {
  const int n = cells_[axis];
  const int pos = static_cast<int>((idx / stride_[axis]) % n);
  int moved = (pos + offset) % n;
  if (moved < 0) moved += n;
  return idx + (static_cast<std::ptrdiff_t>(moved) - pos) * static_cast<std::ptrdiff_t>(stride_[axis]);
}

Point PeriodicGrid::center(std::size_t idx) const {
  const auto ijk = coords(idx);
  Point x{0.0, 0.0, 0.0};
  for (int a = 0; a < dim_; ++a) x[a] = (ijk[a] + 0.5) * h_[a];
  return x;
}

bool PeriodicGrid::operator==(const PeriodicGrid& other) const {
  return dim_ == other.dim_ && cells_ == other.cells_ && lengths_ == other.lengths_;
}

Field sample(const PeriodicGrid& grid, const std::function<double(const Point&)>& fn) {
  Field f(grid.size());
  for (std::size_t idx = 0; idx < grid.size(); ++idx) f[idx] = fn(grid.center(idx));
  return f;
}

VectorField zero_vector_field(const PeriodicGrid& grid) {
  VectorField v;
  v.components.assign(grid.dim(), Field(grid.size(), 0.0));
  return v;
}

VectorField gradient(const Field& field, const PeriodicGrid& grid) {
  VectorField g = zero_vector_field(grid);
  for (int a = 0; a < grid.dim(); ++a) {
    const double scale = 0.5 / grid.spacing(a);
    Field& out = g.components[a];
    for (std::size_t idx = 0; idx < grid.size(); ++idx)
      out[idx] = (field[grid.neighbor(idx, a, 1)] - field[grid.neighbor(idx, a, -1)]) * scale;
  }
  return g;
}

Field divergence(const VectorField& field, const PeriodicGrid& grid) {
  if (field.dim() != grid.dim()) throw DimensionMismatch("vector field dimension differs from grid");
  FaceField faces = zero_vector_field(grid);
  for (int a = 0; a < grid.dim(); ++a) {
    const Field& f = field.components[a];
    for (std::size_t idx = 0; idx < grid.size(); ++idx)
      faces.components[a][idx] = 0.5 * (f[idx] + f[grid.neighbor(idx, a, 1)]);
  }
  return face_divergence(faces, grid);
}

Field face_divergence(const FaceField& flux, const PeriodicGrid& grid) {
  if (flux.dim() != grid.dim()) throw DimensionMismatch("face field dimension differs from grid");
  Field div(grid.size(), 0.0);
  for (int a = 0; a < grid.dim(); ++a) {
    const double inv_h = 1.0 / grid.spacing(a);
    const Field& f = flux.components[a];
    for (std::size_t idx = 0; idx < grid.size(); ++idx)
      div[idx] += (f[idx] - f[grid.neighbor(idx, a, -1)]) * inv_h;
  }
  return div;
}

double integrate(std::span<const double> values, const PeriodicGrid& grid) {
  return pairwise_sum(values) * grid.cell_volume();
}

double integrate(const Field& field, const PeriodicGrid& grid) {
  return integrate(std::span<const double>(field), grid);
}

double inner_product(const Field& a, const Field& b, const PeriodicGrid& grid) {
  Field prod(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) prod[k] = a[k] * b[k];
  return integrate(prod, grid);
}

double inner_product(const VectorField& a, const VectorField& b, const PeriodicGrid& grid) {
  double s = 0.0;
  for (int c = 0; c < a.dim(); ++c) s += inner_product(a.components[c], b.components[c], grid);
  return s;
}

Field translate(const Field& field, const PeriodicGrid& grid, std::array<int, 3> shift) {
  Field out(field.size());
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    std::size_t dst = idx;
    for (int a = 0; a < grid.dim(); ++a) dst = grid.neighbor(dst, a, shift[a]);
    out[dst] = field[idx];
  }
  return out;
}

std::vector<double> ConcentrationState::masses() const {
  std::vector<double> m(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) m[i] = integrate(c[i], grid);
  return m;
}

double ConcentrationState::simplex_defect() const {
  double worst = 0.0;
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    double s = 0.0;
    for (const Field& f : c) s += f[idx];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

double ConcentrationState::min_value() const {
  double lo = std::numeric_limits<double>::infinity();
  for (const Field& f : c)
    for (double v : f) lo = std::min(lo, v);
  return lo;
}

void ConcentrationState::validate(double tol) const {
  if (c.size() < 2) throw InvalidComposition("need at least two species");
  for (const Field& f : c) {
    if (f.size() != grid.size()) throw DimensionMismatch("field size differs from grid");
    for (double v : f)
      if (!(v >= -tol && v <= 1.0 + tol)) throw InvalidComposition("concentration outside [0,1]");
  }
  if (simplex_defect() > tol) throw InvalidComposition("concentrations do not sum to one");
}

void require_same_grid(const ConcentrationState& a, const ConcentrationState& b) {
  if (a.grid != b.grid || a.species() != b.species())
    throw GridMismatch("states live on different grids or species counts");
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    throw FormatError("truncated snapshot stream");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void write_binary(std::ostream& out, const ConcentrationState& state) {
  const PeriodicGrid& g = state.grid;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(g.dim()));
  for (int a = 0; a < g.dim(); ++a) put<std::uint32_t>(out, static_cast<std::uint32_t>(g.cells(a)));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(state.species()));
  put<double>(out, state.time);
  for (const Field& f : state.c)
    for (double v : f) put<double>(out, v);
}

ConcentrationState read_binary(std::istream& in, std::array<double, 3> lengths) {
  const auto dim = get<std::uint32_t>(in);
  if (dim < 1 || dim > 3) throw FormatError("snapshot dimension must be 1, 2 or 3");
  std::array<int, 3> cells{1, 1, 1};
  for (std::uint32_t a = 0; a < dim; ++a) {
    const auto n = get<std::uint32_t>(in);
    if (n == 0 || n > (1u << 20)) throw FormatError("implausible cell count in snapshot");
    cells[a] = static_cast<int>(n);
  }
  const auto n = get<std::uint32_t>(in);
  if (n < 2 || n > 64) throw FormatError("implausible species count in snapshot");
  ConcentrationState state{PeriodicGrid(static_cast<int>(dim), cells, lengths), {}, 0.0};
  state.time = get<double>(in);
  state.c.assign(n, Field(state.grid.size()));
  for (Field& f : state.c)
    for (double& v : f) v = get<double>(in);
  return state;
}

void write_csv(std::ostream& out, const ConcentrationState& state) {
  if (state.grid.dim() != 1) throw DimensionMismatch("CSV snapshots are 1-D only");
  const auto old_precision = out.precision(17);
  out << "x";
  for (int i = 0; i < state.species(); ++i) out << ",c_" << (i + 1);
  out << "\n";
  for (std::size_t idx = 0; idx < state.grid.size(); ++idx) {
    out << state.grid.center(idx)[0];
    for (const Field& f : state.c) out << "," << f[idx];
    out << "\n";
  }
  out.precision(old_precision);
}

}  // namespace msdiff
