#include "aiive/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aiive/error.hpp"
#include "aiive/rng.hpp"

namespace aiive {

namespace {

std::string shape_str(const Matrix& m)
{
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// z = a * W^T + b, one output row per input row.
Matrix dense(const Matrix& a, const DenseParams& p)
{
    const std::size_t in = p.weight.cols();
    const std::size_t out = p.weight.rows();
    if (a.cols() != in)
        throw ShapeError("dense: input " + shape_str(a) + " does not match weight " +
                         shape_str(p.weight));

    Matrix wt(in, out);
    for (std::size_t j = 0; j < out; ++j)
        for (std::size_t k = 0; k < in; ++k)
            wt(k, j) = p.weight(j, k);

    Matrix z(a.rows(), out);
    for (std::size_t b = 0; b < a.rows(); ++b) {
        double* zr = z.row(b).data();
        std::copy(p.bias.begin(), p.bias.end(), zr);
        const double* ar = a.row(b).data();
        for (std::size_t k = 0; k < in; ++k) {
            const double xk = ar[k];
            if (xk == 0.0)
                continue;
            const double* wr = wt.row(k).data();
            for (std::size_t j = 0; j < out; ++j)
                zr[j] += xk * wr[j];
        }
    }
    return z;
}

Matrix relu(const Matrix& z)
{
    Matrix h = z;
    for (double& v : h.flat())
        v = v > 0.0 ? v : 0.0;
    return h;
}

// grad.weight += delta^T a ; grad.bias += column sums of delta
void accumulate_dense_grad(const Matrix& delta, const Matrix& a, DenseParams& grad)
{
    for (std::size_t b = 0; b < delta.rows(); ++b) {
        const double* ar = a.row(b).data();
        for (std::size_t j = 0; j < delta.cols(); ++j) {
            const double d = delta(b, j);
            grad.bias[j] += d;
            if (d == 0.0)
                continue;
            double* gr = grad.weight.row(j).data();
            for (std::size_t k = 0; k < a.cols(); ++k)
                gr[k] += d * ar[k];
        }
    }
}

// (delta W) masked by z > 0
Matrix backprop_relu(const Matrix& delta, const Matrix& weight, const Matrix& z)
{
    Matrix out(delta.rows(), weight.cols());
    for (std::size_t b = 0; b < delta.rows(); ++b) {
        double* orow = out.row(b).data();
        for (std::size_t j = 0; j < delta.cols(); ++j) {
            const double d = delta(b, j);
            if (d == 0.0)
                continue;
            const double* wr = weight.row(j).data();
            for (std::size_t k = 0; k < weight.cols(); ++k)
                orow[k] += d * wr[k];
        }
        for (std::size_t k = 0; k < out.cols(); ++k)
            if (!(z(b, k) > 0.0))
                orow[k] = 0.0;
    }
    return out;
}

void check_hidden_index(int which)
{
    if (which != 1 && which != 2)
        throw InvalidArgument("hidden layer must be 1 or 2, got " + std::to_string(which));
}

void fill_uniform(Matrix& w, std::size_t fan_in, Rng& rng)
{
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w.flat())
        v = rng.uniform(-bound, bound);
}

} // namespace

void validate_sizes(const LayerSizes& sizes)
{
    for (std::size_t s : sizes)
        if (s < 1)
            throw InvalidArgument("layer sizes must all be >= 1");
}

LayerSizes ParamSet::sizes() const
{
    return {layers[0].weight.cols(), layers[0].weight.rows(), layers[1].weight.rows(),
            layers[2].weight.rows()};
}

bool ParamSet::congruent(const ParamSet& other) const
{
    for (std::size_t i = 0; i < kNumLayers; ++i) {
        if (!layers[i].weight.same_shape(other.layers[i].weight) ||
            layers[i].bias.size() != other.layers[i].bias.size())
            return false;
    }
    return true;
}

bool ParamSet::all_finite() const
{
    bool ok = true;
    for_each_array([&](auto values) {
        for (double v : values)
            ok = ok && std::isfinite(v);
    });
    return ok;
}

void ParamSet::set_zero()
{
    for_each_array([](std::span<double> values) { std::fill(values.begin(), values.end(), 0.0); });
}

GradientSet GradientSet::zeros_like(const Mlp& net)
{
    GradientSet g{net.params};
    g.params.set_zero();
    return g;
}

Mlp init_network(const LayerSizes& sizes, std::uint64_t seed)
{
    validate_sizes(sizes);
    Rng rng(seed);
    Mlp net;
    for (std::size_t i = 0; i < kNumLayers; ++i) {
        auto& layer = net.params.layers[i];
        layer.weight = Matrix(sizes[i + 1], sizes[i]);
        layer.bias.assign(sizes[i + 1], 0.0);
        fill_uniform(layer.weight, sizes[i], rng);
    }
    return net;
}

Matrix softmax_rows(const Matrix& logits)
{
    Matrix y(logits.rows(), logits.cols());
    for (std::size_t b = 0; b < logits.rows(); ++b) {
        auto in = logits.row(b);
        auto out = y.row(b);
        const double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            out[c] = std::exp(in[c] - mx);
            sum += out[c];
        }
        for (double& v : out)
            v /= sum;
    }
    return y;
}

ForwardCache forward(const Mlp& net, const Matrix& x_batch)
{
    ForwardCache c;
    c.z1 = dense(x_batch, net.layer(0));
    c.h1 = relu(c.z1);
    c.z2 = dense(c.h1, net.layer(1));
    c.h2 = relu(c.z2);
    c.z3 = dense(c.h2, net.layer(2));
    c.y = softmax_rows(c.z3);
    return c;
}

double cross_entropy(const Matrix& y, std::span<const int> labels)
{
    if (labels.size() != y.rows())
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(y.rows()) + " rows");
    if (labels.empty())
        return 0.0;
    double total = 0.0;
    for (std::size_t b = 0; b < y.rows(); ++b) {
        const auto label = static_cast<std::size_t>(labels[b]);
        if (label >= y.cols())
            throw InvalidArgument("cross_entropy: label out of range");
        total += -std::log(std::max(y(b, label), kLogClamp));
    }
    return total / static_cast<double>(y.rows());
}

GradientSet backward(const Mlp& net, const Matrix& x_batch, const ForwardCache& cache,
                     std::span<const int> labels)
{
    const std::size_t batch = x_batch.rows();
    if (labels.size() != batch || cache.y.rows() != batch || cache.z1.rows() != batch)
        throw ShapeError("backward: batch sizes disagree");
    if (cache.y.cols() != net.sizes()[3] || x_batch.cols() != net.sizes()[0])
        throw ShapeError("backward: cache does not match network shape");

    // Fused softmax + cross-entropy: dL/dz3 = (y - t) / batch
    Matrix delta3 = cache.y;
    const double inv = 1.0 / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        const auto label = static_cast<std::size_t>(labels[b]);
        if (label >= delta3.cols())
            throw InvalidArgument("backward: label out of range");
        delta3(b, label) -= 1.0;
        for (double& v : delta3.row(b))
            v *= inv;
    }

    GradientSet g = GradientSet::zeros_like(net);
    accumulate_dense_grad(delta3, cache.h2, g.params.layers[2]);
    const Matrix delta2 = backprop_relu(delta3, net.layer(2).weight, cache.z2);
    accumulate_dense_grad(delta2, cache.h1, g.params.layers[1]);
    const Matrix delta1 = backprop_relu(delta2, net.layer(1).weight, cache.z1);
    accumulate_dense_grad(delta1, x_batch, g.params.layers[0]);
    return g;
}

ParamSet resize_hidden_zero(const ParamSet& buffer, int which, std::size_t new_count)
{
    check_hidden_index(which);
    if (new_count < 1)
        throw InvalidArgument("hidden layer size must be >= 1");
    const std::size_t in_layer = static_cast<std::size_t>(which) - 1; // rows change here
    const std::size_t out_layer = in_layer + 1;                        // cols change here

    ParamSet out = buffer;
    const DenseParams& src_in = buffer.layers[in_layer];
    DenseParams& dst_in = out.layers[in_layer];
    dst_in.weight = Matrix(new_count, src_in.weight.cols());
    dst_in.bias.assign(new_count, 0.0);
    const std::size_t keep = std::min(new_count, src_in.weight.rows());
    for (std::size_t r = 0; r < keep; ++r) {
        std::copy(src_in.weight.row(r).begin(), src_in.weight.row(r).end(),
                  dst_in.weight.row(r).begin());
        dst_in.bias[r] = src_in.bias[r];
    }

    const Matrix& src_out = buffer.layers[out_layer].weight;
    Matrix& dst_out = out.layers[out_layer].weight;
    dst_out = Matrix(src_out.rows(), new_count);
    for (std::size_t r = 0; r < src_out.rows(); ++r)
        for (std::size_t c = 0; c < keep; ++c)
            dst_out(r, c) = src_out(r, c);
    return out;
}

ParamSet remove_hidden_slot(const ParamSet& buffer, int which, std::size_t index)
{
    check_hidden_index(which);
    const std::size_t in_layer = static_cast<std::size_t>(which) - 1;
    const std::size_t out_layer = in_layer + 1;
    const DenseParams& src_in = buffer.layers[in_layer];
    const std::size_t count = src_in.weight.rows();
    if (index >= count)
        throw InvalidArgument("neuron index " + std::to_string(index) + " out of range");
    if (count <= 1)
        throw InvalidArgument("cannot remove the last neuron of a hidden layer");

    ParamSet out = buffer;
    DenseParams& dst_in = out.layers[in_layer];
    dst_in.weight = Matrix(count - 1, src_in.weight.cols());
    dst_in.bias.clear();
    for (std::size_t r = 0, w = 0; r < count; ++r) {
        if (r == index)
            continue;
        std::copy(src_in.weight.row(r).begin(), src_in.weight.row(r).end(),
                  dst_in.weight.row(w).begin());
        dst_in.bias.push_back(src_in.bias[r]);
        ++w;
    }

    const Matrix& src_out = buffer.layers[out_layer].weight;
    Matrix& dst_out = out.layers[out_layer].weight;
    dst_out = Matrix(src_out.rows(), count - 1);
    for (std::size_t r = 0; r < src_out.rows(); ++r)
        for (std::size_t c = 0, w = 0; c < count; ++c) {
            if (c == index)
                continue;
            dst_out(r, w++) = src_out(r, c);
        }
    return out;
}

Mlp resize_hidden_layer(const Mlp& net, int which, std::size_t new_count, std::uint64_t seed)
{
    check_hidden_index(which);
    if (new_count < 1)
        throw InvalidArgument("hidden layer size must be >= 1");
    const std::size_t in_layer = static_cast<std::size_t>(which) - 1;
    const std::size_t out_layer = in_layer + 1;
    const std::size_t old_count = net.layer(in_layer).weight.rows();

    Mlp out{resize_hidden_zero(net.params, which, new_count)};
    if (new_count <= old_count)
        return out;

    // New incoming rows use the fan-in of this layer, new outgoing columns the
    // fan-in of the next one (which itself grew).
    Rng rng(seed);
    DenseParams& in = out.layer(in_layer);
    const double in_bound = 1.0 / std::sqrt(static_cast<double>(in.weight.cols()));
    for (std::size_t r = old_count; r < new_count; ++r)
        for (double& v : in.weight.row(r))
            v = rng.uniform(-in_bound, in_bound);
    Matrix& next = out.layer(out_layer).weight;
    const double out_bound = 1.0 / std::sqrt(static_cast<double>(new_count));
    for (std::size_t r = 0; r < next.rows(); ++r)
        for (std::size_t c = old_count; c < new_count; ++c)
            next(r, c) = rng.uniform(-out_bound, out_bound);
    return out;
}

Mlp remove_hidden_neuron(const Mlp& net, int which, std::size_t index)
{
    return Mlp{remove_hidden_slot(net.params, which, index)};
}

namespace {

const Matrix& weight_for(const Mlp& net, const EdgeId& id)
{
    if (id.layer < 1 || id.layer > 3)
        throw InvalidArgument("edge layer must be 1..3, got " + std::to_string(id.layer));
    const Matrix& w = net.layer(static_cast<std::size_t>(id.layer) - 1).weight;
    if (id.row >= w.rows() || id.col >= w.cols())
        throw InvalidArgument("edge (" + std::to_string(id.layer) + "," + std::to_string(id.row) +
                              "," + std::to_string(id.col) + ") out of range for " +
                              shape_str(w));
    return w;
}

} // namespace

double edge_weight(const Mlp& net, const EdgeId& id)
{
    return weight_for(net, id)(id.row, id.col);
}

void set_edge_weight(Mlp& net, const EdgeId& id, double value)
{
    weight_for(net, id);
    if (!std::isfinite(value))
        throw NumericError("set_edge_weight: non-finite value");
    net.layer(static_cast<std::size_t>(id.layer) - 1).weight(id.row, id.col) = value;
}

} // namespace aiive
