#include "fdnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fdnet/errors.hpp"

namespace fdnet {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size()))
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
}

std::int64_t Tensor::dim(std::int64_t axis) const {
    if (axis < 0) axis += rank();
    if (axis < 0 || axis >= rank()) throw ShapeError("axis out of range for shape " + shape_str(shape_));
    return shape_[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != numel())
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::select(std::int64_t index) const {
    if (rank() == 0 || index < 0 || index >= shape_[0])
        throw ShapeError("select index " + std::to_string(index) + " out of range for " + shape_str(shape_));
    Shape sub(shape_.begin() + 1, shape_.end());
    const auto block = shape_numel(sub);
    std::vector<double> out(data_.begin() + index * block, data_.begin() + (index + 1) * block);
    return Tensor(std::move(sub), std::move(out));
}

Tensor Tensor::stack(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("stack of zero tensors");
    Shape shape = parts[0].shape();
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(parts[0].numel()) * parts.size());
    for (const auto& p : parts) {
        if (p.shape() != shape) throw ShapeError("stack: mismatched shapes " + shape_str(p.shape()));
        data.insert(data.end(), p.data_.begin(), p.data_.end());
    }
    shape.insert(shape.begin(), static_cast<std::int64_t>(parts.size()));
    return Tensor(std::move(shape), std::move(data));
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

void require_finite(const Tensor& t, const char* what) {
    if (!t.all_finite()) throw NumericError(std::string("non-finite value produced by ") + what);
}

}  // namespace fdnet
