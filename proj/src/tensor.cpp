#include "tev/tensor.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace tev {

Shape::Shape(std::vector<int64_t> dims) : dims_(std::move(dims)) {
  for (int64_t d : dims_) {
    if (d < 0) fail(ErrorKind::OutOfBounds, "negative axis extent " + std::to_string(d));
  }
}

int64_t Shape::elementCount() const {
  int64_t n = 1;
  for (int64_t d : dims_) n *= d;
  return n;
}

std::vector<int64_t> Shape::strides() const {
  std::vector<int64_t> s(dims_.size(), 1);
  for (int i = static_cast<int>(dims_.size()) - 2; i >= 0; --i) {
    s[i] = s[i + 1] * dims_[i + 1];
  }
  return s;
}

std::string Shape::str() const {
  std::string out = "<";
  for (size_t i = 0; i < dims_.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(dims_[i]);
  }
  out += ">";
  return out;
}

bool SliceSpec::operator==(const SliceSpec& other) const {
  if (ranges.size() != other.ranges.size()) return false;
  for (size_t i = 0; i < ranges.size(); ++i) {
    if (ranges[i].start != other.ranges[i].start || ranges[i].stop != other.ranges[i].stop)
      return false;
  }
  return true;
}

std::string SliceSpec::str() const {
  std::string out = "[";
  for (size_t i = 0; i < ranges.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(ranges[i].start) + ":" + std::to_string(ranges[i].stop);
  }
  out += "]";
  return out;
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (static_cast<int64_t>(data_.size()) != shape_.elementCount()) {
    fail(ErrorKind::ElementCountMismatch,
         "data length " + std::to_string(data_.size()) + " does not match shape " +
             shape_.str());
  }
}

Tensor Tensor::full(const Shape& shape, double value) {
  return Tensor(shape, std::vector<double>(static_cast<size_t>(shape.elementCount()), value));
}

std::string formatDouble(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string Tensor::str() const {
  if (shape_.rank() == 0) return formatDouble(data_[0]);
  std::string out = "tensor" + shape_.str() + "[";
  for (size_t i = 0; i < data_.size(); ++i) {
    if (i) out += ", ";
    out += formatDouble(data_[i]);
  }
  out += "]";
  return out;
}

const char* binaryOpName(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return "add";
    case BinaryOp::Sub: return "sub";
    case BinaryOp::Mul: return "mul";
  }
  return "?";
}

const char* unaryOpName(UnaryOp op) {
  switch (op) {
    case UnaryOp::Neg: return "neg";
    case UnaryOp::Log: return "log";
    case UnaryOp::Exp: return "exp";
  }
  return "?";
}

Tensor elementwiseBinary(BinaryOp op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::ShapeMismatch, std::string(binaryOpName(op)) + " of shapes " +
                                       a.shape().str() + " and " + b.shape().str());
  }
  std::vector<double> out(static_cast<size_t>(a.size()));
  auto da = a.data();
  auto db = b.data();
  switch (op) {
    case BinaryOp::Add:
      for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
      break;
    case BinaryOp::Sub:
      for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
      break;
    case BinaryOp::Mul:
      for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
      break;
  }
  return Tensor(a.shape(), std::move(out));
}

Tensor elementwiseUnary(UnaryOp op, const Tensor& a) {
  std::vector<double> out(static_cast<size_t>(a.size()));
  auto da = a.data();
  switch (op) {
    case UnaryOp::Neg:
      for (size_t i = 0; i < out.size(); ++i) out[i] = -da[i];
      break;
    case UnaryOp::Log:
      for (size_t i = 0; i < out.size(); ++i) {
        if (!(da[i] > 0.0)) {
          fail(ErrorKind::DomainError,
               "log of non-positive element " + formatDouble(da[i]));
        }
        out[i] = std::log(da[i]);
      }
      break;
    case UnaryOp::Exp:
      for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(da[i]);
      break;
  }
  return Tensor(a.shape(), std::move(out));
}

Tensor scale(double factor, const Tensor& a) {
  std::vector<double> out(static_cast<size_t>(a.size()));
  auto da = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = factor * da[i];
  return Tensor(a.shape(), std::move(out));
}

Tensor power(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::ShapeMismatch,
         "pow of shapes " + a.shape().str() + " and " + b.shape().str());
  }
  std::vector<double> out(static_cast<size_t>(a.size()));
  auto da = a.data();
  auto db = b.data();
  for (size_t i = 0; i < out.size(); ++i) {
    double base = da[i], exp = db[i];
    if (base < 0.0 && exp != std::floor(exp)) {
      fail(ErrorKind::DomainError, "pow of negative base " + formatDouble(base) +
                                       " with non-integral exponent " + formatDouble(exp));
    }
    if (base == 0.0 && exp < 0.0) {
      fail(ErrorKind::DomainError, "pow of zero base with negative exponent");
    }
    out[i] = std::pow(base, exp);
  }
  return Tensor(a.shape(), std::move(out));
}

Shape reshapeResultShape(const Shape& in, const Shape& target,
                         const std::vector<int>* axisPermutation) {
  if (axisPermutation) {
    const auto& perm = *axisPermutation;
    if (static_cast<int>(perm.size()) != in.rank()) {
      fail(ErrorKind::InvalidPermutation,
           "permutation length " + std::to_string(perm.size()) + " for rank " +
               std::to_string(in.rank()));
    }
    std::vector<bool> seen(perm.size(), false);
    for (int p : perm) {
      if (p < 0 || p >= in.rank() || seen[static_cast<size_t>(p)]) {
        fail(ErrorKind::InvalidPermutation, "not a permutation of 0.." +
                                                std::to_string(in.rank() - 1));
      }
      seen[static_cast<size_t>(p)] = true;
    }
  }
  if (in.elementCount() != target.elementCount()) {
    fail(ErrorKind::ElementCountMismatch, "reshape " + in.str() + " -> " + target.str());
  }
  return target;
}

Tensor reshape(const Tensor& a, const Shape& target,
               const std::vector<int>* axisPermutation) {
  reshapeResultShape(a.shape(), target, axisPermutation);
  if (!axisPermutation) {
    return Tensor(target, std::vector<double>(a.data().begin(), a.data().end()));
  }
  const auto& perm = *axisPermutation;
  const Shape& in = a.shape();
  std::vector<int64_t> permDims(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) {
    permDims[i] = in.extent(perm[i]);
  }
  Shape permShape{std::move(permDims)};
  std::vector<double> out(static_cast<size_t>(a.size()));
  auto inStrides = in.strides();
  auto outStrides = permShape.strides();
  std::vector<int64_t> idx(perm.size(), 0);  // multi-index into permShape
  for (int64_t flat = 0; flat < a.size(); ++flat) {
    int64_t src = 0;
    for (size_t ax = 0; ax < perm.size(); ++ax) {
      src += idx[ax] * inStrides[static_cast<size_t>(perm[ax])];
    }
    out[static_cast<size_t>(flat)] = a.at(src);
    for (int ax = static_cast<int>(perm.size()) - 1; ax >= 0; --ax) {
      if (++idx[static_cast<size_t>(ax)] < permShape.extent(ax)) break;
      idx[static_cast<size_t>(ax)] = 0;
    }
  }
  return Tensor(target, std::move(out));
}

Shape sliceResultShape(const Shape& in, const SliceSpec& spec) {
  if (static_cast<int>(spec.ranges.size()) != in.rank()) {
    fail(ErrorKind::OutOfBounds, "slice spec has " + std::to_string(spec.ranges.size()) +
                                     " axes for shape " + in.str());
  }
  std::vector<int64_t> dims(spec.ranges.size());
  for (size_t ax = 0; ax < spec.ranges.size(); ++ax) {
    const auto& r = spec.ranges[ax];
    if (r.start < 0 || r.start > r.stop || r.stop > in.extent(static_cast<int>(ax))) {
      fail(ErrorKind::OutOfBounds, "slice range " + std::to_string(r.start) + ":" +
                                       std::to_string(r.stop) + " on axis " +
                                       std::to_string(ax) + " of " + in.str());
    }
    dims[ax] = r.stop - r.start;
  }
  return Shape{std::move(dims)};
}

Tensor slice(const Tensor& a, const SliceSpec& spec) {
  Shape outShape = sliceResultShape(a.shape(), spec);
  std::vector<double> out(static_cast<size_t>(outShape.elementCount()));
  if (out.empty()) return Tensor(outShape, std::move(out));
  auto inStrides = a.shape().strides();
  int rank = outShape.rank();
  std::vector<int64_t> idx(static_cast<size_t>(rank), 0);
  for (size_t flat = 0; flat < out.size(); ++flat) {
    int64_t src = 0;
    for (int ax = 0; ax < rank; ++ax) {
      src += (spec.ranges[static_cast<size_t>(ax)].start + idx[static_cast<size_t>(ax)]) *
             inStrides[static_cast<size_t>(ax)];
    }
    out[flat] = a.at(src);
    for (int ax = rank - 1; ax >= 0; --ax) {
      if (++idx[static_cast<size_t>(ax)] < outShape.extent(ax)) break;
      idx[static_cast<size_t>(ax)] = 0;
    }
  }
  return Tensor(outShape, std::move(out));
}

Shape concatResultShape(const Shape& a, const Shape& b, int axis) {
  if (a.rank() != b.rank()) {
    fail(ErrorKind::ShapeMismatch, "concat of ranks " + std::to_string(a.rank()) +
                                       " and " + std::to_string(b.rank()));
  }
  if (axis < 0 || axis >= a.rank()) {
    fail(ErrorKind::AxisOutOfRange,
         "concat axis " + std::to_string(axis) + " for rank " + std::to_string(a.rank()));
  }
  std::vector<int64_t> dims = a.dims();
  for (int ax = 0; ax < a.rank(); ++ax) {
    if (ax == axis) continue;
    if (a.extent(ax) != b.extent(ax)) {
      fail(ErrorKind::ShapeMismatch,
           "concat of " + a.str() + " and " + b.str() + " on axis " + std::to_string(axis));
    }
  }
  dims[static_cast<size_t>(axis)] = a.extent(axis) + b.extent(axis);
  return Shape{std::move(dims)};
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  Shape outShape = concatResultShape(a.shape(), b.shape(), axis);
  std::vector<double> out(static_cast<size_t>(outShape.elementCount()));
  // outer = product of extents before axis, inner = elements after axis.
  int64_t outer = 1;
  for (int ax = 0; ax < axis; ++ax) outer *= outShape.extent(ax);
  int64_t inner = 1;
  for (int ax = axis + 1; ax < outShape.rank(); ++ax) inner *= outShape.extent(ax);
  int64_t aBlock = a.shape().extent(axis) * inner;
  int64_t bBlock = b.shape().extent(axis) * inner;
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t k = 0; k < aBlock; ++k)
      out[static_cast<size_t>(o * (aBlock + bBlock) + k)] = a.at(o * aBlock + k);
    for (int64_t k = 0; k < bBlock; ++k)
      out[static_cast<size_t>(o * (aBlock + bBlock) + aBlock + k)] = b.at(o * bBlock + k);
  }
  return Tensor(outShape, std::move(out));
}

bool broadcastCompatible(const Shape& from, const Shape& to) {
  if (from.rank() > to.rank()) return false;
  int offset = to.rank() - from.rank();
  for (int ax = 0; ax < from.rank(); ++ax) {
    int64_t f = from.extent(ax);
    int64_t t = to.extent(ax + offset);
    if (f != t && f != 1) return false;
  }
  return true;
}

Tensor broadcastTo(const Tensor& a, const Shape& target) {
  if (!broadcastCompatible(a.shape(), target)) {
    fail(ErrorKind::IncompatibleBroadcast,
         "broadcast " + a.shape().str() + " -> " + target.str());
  }
  std::vector<double> out(static_cast<size_t>(target.elementCount()));
  if (out.empty()) return Tensor(target, std::move(out));
  int offset = target.rank() - a.shape().rank();
  auto srcStrides = a.shape().strides();
  int rank = target.rank();
  std::vector<int64_t> idx(static_cast<size_t>(rank), 0);
  for (size_t flat = 0; flat < out.size(); ++flat) {
    int64_t src = 0;
    for (int ax = offset; ax < rank; ++ax) {
      int srcAx = ax - offset;
      int64_t i = idx[static_cast<size_t>(ax)];
      if (a.shape().extent(srcAx) == 1) i = 0;
      src += i * srcStrides[static_cast<size_t>(srcAx)];
    }
    out[flat] = a.at(src);
    for (int ax = rank - 1; ax >= 0; --ax) {
      if (++idx[static_cast<size_t>(ax)] < target.extent(ax)) break;
      idx[static_cast<size_t>(ax)] = 0;
    }
  }
  return Tensor(target, std::move(out));
}

bool allClose(const Tensor& a, const Tensor& b, double relTol, double absTol) {
  if (a.shape() != b.shape()) return false;
  auto da = a.data();
  auto db = b.data();
  for (size_t i = 0; i < da.size(); ++i) {
    if (!(std::abs(da[i] - db[i]) <= absTol + relTol * std::abs(db[i]))) return false;
  }
  return true;
}

}  // namespace tev
