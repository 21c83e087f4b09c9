#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace vitalsynth {

struct Node;

// Extents of a dense row-major array. A rank-0 shape denotes a scalar.
using Shape = std::vector<size_t>;

size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense float64 array with an optional handle into the differentiation
// graph. Values are immutable once constructed; every operation returns a
// new tensor. Copies share the underlying buffer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  // A graph-tracked leaf: a trainable parameter or differentiation root.
  static Tensor leaf(Shape shape, std::vector<double> values);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t numel() const { return data_ ? data_->size() : 0; }
  size_t dim(size_t axis) const;

  const std::vector<double>& values() const { return *data_; }
  // Single-element access; requires numel() == 1.
  double value() const;
  double at(size_t flat) const { return (*data_)[flat]; }

  bool tracked() const { return node_ != nullptr; }
  const std::shared_ptr<Node>& node() const { return node_; }

  // Same buffer, no graph handle.
  Tensor detach() const;
  // Same buffer, fresh leaf node (used when refreshing parameters).
  Tensor as_leaf() const;

  // Registers the producing operation; used by op implementations only.
  void attach(std::shared_ptr<Node> node) { node_ = std::move(node); }

 private:
  Tensor(Shape shape, std::shared_ptr<const std::vector<double>> data)
      : shape_(std::move(shape)), data_(std::move(data)) {}

  Shape shape_{};
  std::shared_ptr<const std::vector<double>> data_{};
  std::shared_ptr<Node> node_{};
};

}  // namespace vitalsynth
