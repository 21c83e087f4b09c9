#include "vitalsynth/tensor.hpp"

#include <memory>
#include <utility>

#include "vitalsynth/autograd.hpp"
#include "vitalsynth/errors.hpp"

namespace vitalsynth {

size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  out += "]";
  return out;
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  return Tensor(std::move(shape),
                std::make_shared<const std::vector<double>>(std::move(values)));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const size_t n = shape_numel(shape);
  return Tensor(std::move(shape),
                std::make_shared<const std::vector<double>>(n, value));
}

Tensor Tensor::scalar(double value) { return full({}, value); }

Tensor Tensor::leaf(Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values));
  return t.as_leaf();
}

size_t Tensor::dim(size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape_));
  }
  return shape_[axis];
}

double Tensor::value() const {
  if (numel() != 1) {
    throw ContractError("value() requires a single-element tensor, got shape " +
                        shape_str(shape_));
  }
  return (*data_)[0];
}

Tensor Tensor::detach() const {
  Tensor t(shape_, data_);
  return t;
}

Tensor Tensor::as_leaf() const {
  Tensor t(shape_, data_);
  auto node = std::make_shared<Node>();
  node->op = "leaf";
  t.attach(std::move(node));
  return t;
}

}  // namespace vitalsynth
