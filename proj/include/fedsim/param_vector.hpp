#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedsim/errors.hpp"

namespace fedsim {

// One named contiguous slice of a flat parameter vector.
struct LayerSegment {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
};

using Layout = std::vector<LayerSegment>;

// Flat model parameter vector with a named-segment layout. This is the unit
// exchanged between clients and the server; nothing else crosses that
// boundary. The layout is shared and immutable, so copies are cheap to
// compare and values carry plain value semantics.
struct ParamVector {
  std::shared_ptr<const Layout> layout;
  std::vector<double> values;

  ParamVector() = default;
  ParamVector(std::shared_ptr<const Layout> l, std::vector<double> v)
      : layout(std::move(l)), values(std::move(v)) {}

  std::size_t size() const { return values.size(); }

  bool same_layout(const ParamVector& other) const {
    if (layout == other.layout) return true;
    if (!layout || !other.layout) return false;
    if (layout->size() != other.layout->size()) return false;
    for (std::size_t i = 0; i < layout->size(); ++i) {
      const LayerSegment& a = (*layout)[i];
      const LayerSegment& b = (*other.layout)[i];
      if (a.name != b.name || a.offset != b.offset || a.length != b.length)
        return false;
    }
    return true;
  }

  const LayerSegment& segment_info(std::string_view name) const {
    for (const LayerSegment& s : *layout) {
      if (s.name == name) return s;
    }
    throw ShapeError("unknown layer segment: " + std::string(name));
  }

  std::span<double> segment(std::string_view name) {
    const LayerSegment& s = segment_info(name);
    return {values.data() + s.offset, s.length};
  }

  std::span<const double> segment(std::string_view name) const {
    const LayerSegment& s = segment_info(name);
    return {values.data() + s.offset, s.length};
  }

  // Enforces the structural invariants: segments contiguous, ordered,
  // non-overlapping, covering the vector; all values finite.
  void validate() const {
    if (!layout) throw ShapeError("parameter vector has no layout");
    std::size_t expected = 0;
    for (const LayerSegment& s : *layout) {
      if (s.offset != expected)
        throw ShapeError("layout segment '" + s.name + "' is not contiguous");
      expected += s.length;
    }
    if (expected != values.size())
      throw ShapeError("layout does not cover the parameter vector");
    for (double v : values) {
      if (!std::isfinite(v))
        throw NumericError("non-finite value in parameter vector");
    }
  }
};

// Gradients share the layout and arithmetic of the parameters they
// differentiate.
using GradientVector = ParamVector;

inline void require_same_layout(const ParamVector& a, const ParamVector& b) {
  if (!a.same_layout(b) || a.values.size() != b.values.size())
    throw ShapeError("parameter layouts do not match");
}

inline ParamVector zeros_like(const ParamVector& p) {
  return ParamVector(p.layout, std::vector<double>(p.values.size(), 0.0));
}

// y += a * x
inline void axpy(double a, const ParamVector& x, ParamVector& y) {
  require_same_layout(x, y);
  for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] += a * x.values[i];
}

inline void scale(ParamVector& p, double a) {
  for (double& v : p.values) v *= a;
}

inline ParamVector subtract(const ParamVector& a, const ParamVector& b) {
  require_same_layout(a, b);
  ParamVector out = a;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= b.values[i];
  return out;
}

inline double dot(const ParamVector& a, const ParamVector& b) {
  require_same_layout(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
  return s;
}

inline double l2_norm(const ParamVector& p) {
  double s = 0.0;
  for (double v : p.values) s += v * v;
  return std::sqrt(s);
}

inline double l2_distance(const ParamVector& a, const ParamVector& b) {
  require_same_layout(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    double d = a.values[i] - b.values[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline bool bitwise_equal(const ParamVector& a, const ParamVector& b) {
  return a.same_layout(b) && a.values == b.values;
}

}  // namespace fedsim
