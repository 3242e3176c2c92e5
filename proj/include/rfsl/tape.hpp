#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfsl {

// All buffers are row-major 2-D. Vectors are 1 x n, scalars 1 x 1.
struct Shape {
  int rows = 0;
  int cols = 0;
  int size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

// Persistent named buffer with a gradient slot. Model parameters are Tensors
// owned by their modules; Tape::backward accumulates into grad.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::string name, Shape shape, double fill = 0.0)
      : name(std::move(name)),
        shape(shape),
        value(static_cast<size_t>(shape.size()), fill),
        grad(static_cast<size_t>(shape.size()), 0.0) {}
  Tensor(std::string name, Shape shape, std::vector<double> init)
      : name(std::move(name)),
        shape(shape),
        value(std::move(init)),
        grad(static_cast<size_t>(shape.size()), 0.0) {
    if (static_cast<int>(value.size()) != shape.size())
      throw std::invalid_argument("Tensor: init size does not match shape");
  }

  int size() const { return shape.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
};

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid for the tape's lifetime.
struct Value {
  Tape* tape = nullptr;
  int id = -1;
};

// Dynamically recorded reverse-mode tape. One tape per forward/backward
// episode; recording and backward are single-threaded. With grad disabled the
// tape records values only (no closures, no grad buffers), so evaluation and
// training share one forward implementation bit for bit.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static constexpr double kLayerNormEps = 1e-5;

  Value input(Shape shape, std::span<const double> data);
  Value param(Tensor& t);

  // elementwise, identical shapes
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value div(Value a, Value b);
  Value scale(Value a, double c);
  Value neg(Value a) { return scale(a, -1.0); }

  Value matmul(Value a, Value b);     // [m,k]x[k,n] -> [m,n]
  Value matmul_nt(Value a, Value b);  // [m,k]x[n,k]^T -> [m,n]
  Value matmul_tn(Value a, Value b);  // [k,m]^T x [k,n] -> [m,n]
  Value add_row_bias(Value m, Value bias);
  Value linear(Value x, Value w, Value b) { return add_row_bias(matmul(x, w), b); }

  // x is time-major [T, C]; output rows are windows, entry (t, j*C + c) =
  // x[t*stride - pad + j, c] with zero padding out of range.
  Value im2col(Value x, int kernel, int stride, int pad);
  // w is [kernel*C, out], b is [1, out]; returns [T_out, out]
  Value conv1d(Value x, Value w, Value b, int kernel, int stride, int pad);

  Value layer_norm(Value x, Value gamma, Value beta);  // per row, eps inside sqrt
  Value softmax(Value x);                              // per row, max-subtracted
  Value gelu(Value x);                                 // exact erf form
  Value relu(Value x);
  Value abs(Value x);

  Value mean_axis0(Value x);  // [m,n] -> [1,n]
  Value sum_all(Value x);     // -> [1,1]
  Value l1_norm(Value x);     // sum of |entries| -> [1,1]

  Value slice_rows(Value x, int start, int n);
  Value slice_cols(Value x, int start, int n);
  Value concat_cols(std::span<const Value> parts);  // same row count
  Value stack_rows(std::span<const Value> rows);    // list of [1,n] -> [m,n]

  // mean over rows of -log softmax(logits)[label]
  Value cross_entropy_with_logits(Value logits, std::span<const int> labels);

  // frame [2,T], shapelet [2,L] -> [1, T-L+1]; entry j is the Frobenius
  // distance between the shapelet and the frame window starting at j.
  Value sliding_distance(Value frame, Value shapelet);

  // L2-normalize each column; columns with norm < 1e-12 map to zero.
  Value column_normalize(Value a);

  // single-head attention: softmax(q k^T / sqrt(d)) v, composed from primitives
  Value scaled_dot_product_attention(Value q, Value k, Value v);

  void backward(Value scalar_out);

  const Shape& shape(Value v) const { return nodes_[v.id].shape; }
  const std::vector<double>& value(Value v) const { return nodes_[v.id].value; }
  double scalar(Value v) const;
  bool grad_enabled() const { return grad_enabled_; }
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::function<void(Tape&)> pull;  // accumulates this node's grad into parents
    Tensor* leaf = nullptr;
    bool needs_grad = false;
  };

  int new_node(Shape shape, bool needs_grad);
  bool wants_grad(Value v) const { return nodes_[v.id].needs_grad; }
  void check_same_tape(Value v) const;

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;

  friend struct TapeAccess;
};

inline Value operator+(Value a, Value b) { return a.tape->add(a, b); }
inline Value operator-(Value a, Value b) { return a.tape->sub(a, b); }
inline Value operator*(Value a, Value b) { return a.tape->mul(a, b); }
inline Value operator/(Value a, Value b) { return a.tape->div(a, b); }

}  // namespace rfsl
