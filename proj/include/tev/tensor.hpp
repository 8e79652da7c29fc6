#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "tev/error.hpp"

namespace tev {

// Dense shape descriptor. Rank 0 denotes a scalar with element count 1;
// zero extents are legal and give an element count of 0.
class Shape {
 public:
  Shape() = default;
  explicit Shape(std::vector<int64_t> dims);
  Shape(std::initializer_list<int64_t> dims) : Shape(std::vector<int64_t>(dims)) {}

  int rank() const { return static_cast<int>(dims_.size()); }
  int64_t extent(int axis) const { return dims_[static_cast<size_t>(axis)]; }
  const std::vector<int64_t>& dims() const { return dims_; }
  int64_t elementCount() const;

  bool operator==(const Shape& other) const { return dims_ == other.dims_; }
  bool operator!=(const Shape& other) const { return dims_ != other.dims_; }

  // Row-major strides in elements (trailing-axis products).
  std::vector<int64_t> strides() const;

  std::string str() const;  // "<2,3>"; rank 0 prints "<>"

 private:
  std::vector<int64_t> dims_;
};

// Per-axis half-open [start, stop) ranges, step fixed at 1.
struct SliceSpec {
  struct Range {
    int64_t start = 0;
    int64_t stop = 0;
  };
  std::vector<Range> ranges;

  bool operator==(const SliceSpec& other) const;
  std::string str() const;  // "[1:2, 0:3]"
};

// Immutable dense tensor of f64, row-major. Value semantics throughout.
class Tensor {
 public:
  Tensor() : shape_(), data_(1, 0.0) {}  // rank-0 zero
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(const Shape& shape) { return full(shape, 0.0); }
  static Tensor ones(const Shape& shape) { return full(shape, 1.0); }
  static Tensor full(const Shape& shape, double value);
  static Tensor scalar(double value) { return Tensor(Shape{}, {value}); }

  const Shape& shape() const { return shape_; }
  std::span<const double> data() const { return data_; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  double at(int64_t flat) const { return data_[static_cast<size_t>(flat)]; }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

  std::string str() const;  // "tensor<2>[1, 2]"; rank 0 prints the bare number

 private:
  Shape shape_;
  std::vector<double> data_;
};

enum class BinaryOp { Add, Sub, Mul };
enum class UnaryOp { Neg, Log, Exp };

const char* binaryOpName(BinaryOp op);  // "add" | "sub" | "mul"
const char* unaryOpName(UnaryOp op);    // "neg" | "log" | "exp"

Tensor elementwiseBinary(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor elementwiseUnary(UnaryOp op, const Tensor& a);

// Scalar multiply; shape preserved.
Tensor scale(double factor, const Tensor& a);

// Elementwise a^b; shapes must match. Rejects negative bases with
// non-integral exponents and 0 raised to a negative power.
Tensor power(const Tensor& a, const Tensor& b);

// Optional permutation of axes (materialized), then row-major
// reinterpretation under the target shape. Element count must be preserved.
Tensor reshape(const Tensor& a, const Shape& target,
               const std::vector<int>* axisPermutation = nullptr);

Tensor slice(const Tensor& a, const SliceSpec& spec);

Tensor concat(const Tensor& a, const Tensor& b, int axis);

// Trailing-axis broadcast: align shapes at the last axis; every aligned
// source extent must equal the target's or be 1; missing leading axes act
// as extent 1.
Tensor broadcastTo(const Tensor& a, const Shape& target);

// True iff shapes are equal and |a[i]-b[i]| <= absTol + relTol*|b[i]| for
// every element. Shape mismatch returns false rather than throwing.
bool allClose(const Tensor& a, const Tensor& b, double relTol = 1e-9,
              double absTol = 1e-12);

// Shape-level counterparts used by validation and the rewrite engine.
Shape reshapeResultShape(const Shape& in, const Shape& target,
                         const std::vector<int>* axisPermutation);
Shape sliceResultShape(const Shape& in, const SliceSpec& spec);
Shape concatResultShape(const Shape& a, const Shape& b, int axis);
bool broadcastCompatible(const Shape& from, const Shape& to);

std::string formatDouble(double v);  // shortest round-trip decimal form

}  // namespace tev
