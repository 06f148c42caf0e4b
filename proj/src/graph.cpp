#include "uwie/graph.hpp"

#include <algorithm>
#include <cmath>

#include "uwie/ops.hpp"

namespace uwie {

const char* op_kind_name(OpKind kind) {
    switch (kind) {
        case OpKind::Conv2d: return "conv2d";
        case OpKind::LeakyRelu: return "leaky_relu";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::MaxPool2: return "max_pool2d";
        case OpKind::Upsample2: return "upsample_nearest";
        case OpKind::ConcatChannels: return "concat_channels";
        case OpKind::Linear: return "linear";
        case OpKind::GlobalAvgPool: return "global_avg_pool";
        case OpKind::Softmax: return "softmax";
        case OpKind::MseReduce: return "mse_reduce";
        case OpKind::CrossEntropyReduce: return "cross_entropy_reduce";
        case OpKind::NegEntropyReduce: return "neg_entropy_reduce";
    }
    return "?";
}

template <typename T>
int Graph<T>::new_slot(const std::string& name, std::vector<int> shape) {
    for (int d : shape)
        if (d <= 0) throw ShapeError(name + ": nonpositive dimension in " + shape_str(shape));
    slots_.emplace_back(std::move(shape));
    slots_.back().ensure_grad();
    names_.push_back(name);
    return static_cast<int>(slots_.size()) - 1;
}

template <typename T>
void Graph<T>::shape_fail(const std::string& label, const std::string& what) const {
    throw ShapeError(label + ": " + what);
}

template <typename T>
int Graph<T>::add_input(const std::string& name, std::vector<int> shape) {
    const int id = new_slot(name, std::move(shape));
    input_slots_.push_back(id);
    return id;
}

template <typename T>
int Graph<T>::add_param(const std::string& name, std::vector<int> shape) {
    for (int p : param_slots_)
        if (names_[static_cast<std::size_t>(p)] == name)
            throw StateError("duplicate parameter name: " + name);
    const int id = new_slot(name, std::move(shape));
    param_slots_.push_back(id);
    return id;
}

template <typename T>
int Graph<T>::conv2d(int x, int w, int bias, int stride, int pad) {
    const std::string label = "conv2d#" + std::to_string(op_counter_++);
    const auto& xs = shape_of(x);
    const auto& ws = shape_of(w);
    if (xs.size() != 3) shape_fail(label, "input must be CHW, got " + shape_str(xs));
    if (ws.size() != 4 || ws[2] != ws[3]) shape_fail(label, "weight must be [cout,cin,k,k], got " + shape_str(ws));
    if (ws[1] != xs[0])
        shape_fail(label, "weight cin " + std::to_string(ws[1]) + " != input channels " + std::to_string(xs[0]));
    if (shape_of(bias) != std::vector<int>{ws[0]}) shape_fail(label, "bias must be [cout]");
    const int oh = ops::conv_out_extent(xs[1], ws[2], stride, pad);
    const int ow = ops::conv_out_extent(xs[2], ws[3], stride, pad);
    if (oh <= 0 || ow <= 0) shape_fail(label, "empty output extent");

    Node n;
    n.kind = OpKind::Conv2d;
    n.a = x;
    n.w = w;
    n.bias = bias;
    n.stride = stride;
    n.pad = pad;
    n.label = label;
    n.out = new_slot(label, {ws[0], oh, ow});
    nodes_.push_back(std::move(n));
    return nodes_.back().out;
}

template <typename T>
int Graph<T>::leaky_relu(int x, double slope) {
    const std::string label = "leaky_relu#" + std::to_string(op_counter_++);
    Node n;
    n.kind = OpKind::LeakyRelu;
    n.a = x;
    n.slope = slope;
    n.label = label;
    n.out = new_slot(label, shape_of(x));
    nodes_.push_back(std::move(n));
    return nodes_.back().out;
}

template <typename T>
int Graph<T>::sigmoid(int x) {
    const std::string label = "sigmoid#" + std::to_string(op_counter_++);
    Node n;
    n.kind = OpKind::Sigmoid;
    n.a = x;
    n.label = label;
    n.out = new_slot(label, shape_of(x));
    nodes_.push_back(std::move(n));
    return nodes_.back().out;
}

template <typename T>
int Graph<T>::max_pool2(int x) {
    const std::string label = "max_pool2d#" + std::to_string(op_counter_++);
    const auto& xs = shape_of(x);
    if (xs.size() != 3) shape_fail(label, "input must be CHW");
    if (xs[1] % 2 != 0 || xs[2] % 2 != 0) shape_fail(label, "spatial dims must be even, got " + shape_str(xs));
    Node n;
    n.kind = OpKind::MaxPool2;
    n.a = x;
    n.label = label;
    n.out = new_slot(label, {xs[0], xs[1] / 2, xs[2] / 2});
    n.aux.resize(shape_numel(shape_of(n.out)));
    nodes_.push_back(std::move(n));
    return nodes_.back().out;
}

template <typename T>
int Graph<T>::upsample2(int x) {
    const std::string label = "upsample_nearest#" + std::to_string(op_counter_++);
    const auto& xs = shape_of(x);
    if (xs.size() != 3) shape_fail(label, "input must be CHW");
    Node n;
    n.kind = OpKind::Upsample2;
    n.a = x;
    n.label = label;
    n.out = new_slot(label, {xs[0], xs[1] * 2, xs[2] * 2});
    nodes_.push_back(std::move(n));
    return nodes_.back().out;
}

template <typename T>
int Graph<T>::concat_channels(int a, int b) {
    const std::string label = "concat_channels#" + std::to_string(op_counter_++);
    const auto& as = shape_of(a);
    const auto& bs = shape_of(b);
    if (as.size() != 3 || bs.size() != 3) shape_fail(label, "inputs must be CHW");
    if (as[1] != bs[1] || as[2] != bs[2])
        shape_fail(label, "spatial dims differ: " + shape_str(as) + " vs " + shape_str(bs));
    Node n;
    n.kind = OpKind::ConcatChannels;
    n.a = a;
    n.b = b;
    n.label = label;
    n.out = new_slot(label, {as[0] + bs[0], as[1], as[2]});
    nodes_.push_back(std::move(n));
    return nodes_.back().out;
}

template <typename T>
int Graph<T>::linear(int x, int w, int bias) {
    const std::string label = "linear#" + std::to_string(op_counter_++);
    const auto& xs = shape_of(x);
    const auto& ws = shape_of(w);
    if (xs.size() != 1) shape_fail(label, "input must be a vector, got " + shape_str(xs));
    if (ws.size() != 2 || ws[1] != xs[0]) shape_fail(label, "weight must be [out," + std::to_string(xs[0]) + "]");
    if (shape_of(bias) != std::vector<int>{ws[0]}) shape_fail(label, "bias must be [out]");
    Node n;
    n.kind = OpKind::Linear;
    n.a = x;
    n.w = w;
    n.bias = bias;
    n.label = label;
    n.out = new_slot(label, {ws[0]});
    nodes_.push_back(std::move(n));
    return nodes_.back().out;
}

template <typename T>
int Graph<T>::global_avg_pool(int x) {
    const std::string label = "global_avg_pool#" + std::to_string(op_counter_++);
    const auto& xs = shape_of(x);
    if (xs.size() != 3) shape_fail(label, "input must be CHW");
    Node n;
    n.kind = OpKind::GlobalAvgPool;
    n.a = x;
    n.label = label;
    n.out = new_slot(label, {xs[0]});
    nodes_.push_back(std::move(n));
    return nodes_.back().out;
}

template <typename T>
int Graph<T>::softmax(int x) {
    const std::string label = "softmax#" + std::to_string(op_counter_++);
    if (shape_of(x).size() != 1) shape_fail(label, "input must be a vector");
    Node n;
    n.kind = OpKind::Softmax;
    n.a = x;
    n.label = label;
    n.out = new_slot(label, shape_of(x));
    nodes_.push_back(std::move(n));
    return nodes_.back().out;
}

template <typename T>
int Graph<T>::mse(int pred, int target) {
    const std::string label = "mse_reduce#" + std::to_string(op_counter_++);
    if (shape_of(pred) != shape_of(target)) shape_fail(label, "pred/target shapes differ");
    Node n;
    n.kind = OpKind::MseReduce;
    n.a = pred;
    n.b = target;
    n.label = label;
    n.out = new_slot(label, {1});
    nodes_.push_back(std::move(n));
    return nodes_.back().out;
}

template <typename T>
int Graph<T>::cross_entropy(int probs, int onehot) {
    const std::string label = "cross_entropy_reduce#" + std::to_string(op_counter_++);
    if (shape_of(probs).size() != 1 || shape_of(probs) != shape_of(onehot))
        shape_fail(label, "probs/onehot must be equal-length vectors");
    Node n;
    n.kind = OpKind::CrossEntropyReduce;
    n.a = probs;
    n.b = onehot;
    n.label = label;
    n.out = new_slot(label, {1});
    nodes_.push_back(std::move(n));
    return nodes_.back().out;
}

template <typename T>
int Graph<T>::neg_entropy(int probs) {
    const std::string label = "neg_entropy_reduce#" + std::to_string(op_counter_++);
    if (shape_of(probs).size() != 1) shape_fail(label, "probs must be a vector");
    Node n;
    n.kind = OpKind::NegEntropyReduce;
    n.a = probs;
    n.label = label;
    n.out = new_slot(label, {1});
    nodes_.push_back(std::move(n));
    return nodes_.back().out;
}

template <typename T>
void Graph<T>::mark_output(int slot) {
    output_slots_.push_back(slot);
}

template <typename T>
void Graph<T>::forward() {
    for (Node& n : nodes_) {
        Tensor<T>& out = slot(n.out);
        const Tensor<T>& a = slot(n.a);
        switch (n.kind) {
            case OpKind::Conv2d: {
                const Tensor<T>& w = slot(n.w);
                ops::conv2d_forward(a.data.data(), a.shape[0], a.shape[1], a.shape[2],
                                    w.data.data(), w.shape[0], w.shape[2], n.stride, n.pad,
                                    slot(n.bias).data.data(), out.data.data());
                break;
            }
            case OpKind::LeakyRelu:
                ops::leaky_relu_forward(a.data.data(), a.numel(), static_cast<T>(n.slope),
                                        out.data.data());
                break;
            case OpKind::Sigmoid:
                ops::sigmoid_forward(a.data.data(), a.numel(), out.data.data());
                break;
            case OpKind::MaxPool2:
                ops::max_pool2_forward(a.data.data(), a.shape[0], a.shape[1], a.shape[2],
                                       out.data.data(), n.aux.data());
                break;
            case OpKind::Upsample2:
                ops::upsample2_forward(a.data.data(), a.shape[0], a.shape[1], a.shape[2],
                                       out.data.data());
                break;
            case OpKind::ConcatChannels: {
                const Tensor<T>& b = slot(n.b);
                std::copy(a.data.begin(), a.data.end(), out.data.begin());
                std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.numel()));
                break;
            }
            case OpKind::Linear: {
                const Tensor<T>& w = slot(n.w);
                ops::linear_forward(a.data.data(), a.shape[0], w.data.data(), w.shape[0],
                                    slot(n.bias).data.data(), out.data.data());
                break;
            }
            case OpKind::GlobalAvgPool:
                ops::global_avg_pool_forward(a.data.data(), a.shape[0], a.shape[1], a.shape[2],
                                             out.data.data());
                break;
            case OpKind::Softmax:
                ops::softmax_forward(a.data.data(), a.shape[0], out.data.data());
                break;
            case OpKind::MseReduce:
                out.data[0] = ops::mse_value(a.data.data(), slot(n.b).data.data(), a.numel());
                break;
            case OpKind::CrossEntropyReduce:
                out.data[0] = ops::cross_entropy_value(a.data.data(), slot(n.b).data.data(), a.shape[0]);
                break;
            case OpKind::NegEntropyReduce:
                out.data[0] = ops::neg_entropy_value(a.data.data(), a.shape[0]);
                break;
        }
    }
    forward_done_ = true;
}

template <typename T>
void Graph<T>::backward(bool accumulate_param_grads) {
    if (!forward_done_) throw StateError("backward called before forward");

    // Output gradients were staged by the caller; everything else starts at
    // exact zero.
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        const int id = static_cast<int>(i);
        if (std::find(output_slots_.begin(), output_slots_.end(), id) == output_slots_.end())
            slots_[i].zero_grad();
    }

    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = *it;
        Tensor<T>& out = slot(n.out);
        Tensor<T>& a = slot(n.a);
        switch (n.kind) {
            case OpKind::Conv2d: {
                Tensor<T>& w = slot(n.w);
                ops::conv2d_backward_input(out.grad.data(), w.shape[0], w.data.data(), a.shape[0],
                                           a.shape[1], a.shape[2], w.shape[2], n.stride, n.pad,
                                           a.grad.data());
                if (accumulate_param_grads)
                    ops::conv2d_backward_params(out.grad.data(), w.shape[0], a.data.data(),
                                                a.shape[0], a.shape[1], a.shape[2], w.shape[2],
                                                n.stride, n.pad, w.grad.data(),
                                                slot(n.bias).grad.data());
                break;
            }
            case OpKind::LeakyRelu:
                ops::leaky_relu_backward(a.data.data(), out.grad.data(), a.numel(),
                                         static_cast<T>(n.slope), a.grad.data());
                break;
            case OpKind::Sigmoid:
                ops::sigmoid_backward(out.data.data(), out.grad.data(), a.numel(), a.grad.data());
                break;
            case OpKind::MaxPool2:
                ops::max_pool2_backward(out.grad.data(), a.shape[0], a.shape[1], a.shape[2],
                                        n.aux.data(), a.grad.data());
                break;
            case OpKind::Upsample2:
                ops::upsample2_backward(out.grad.data(), a.shape[0], a.shape[1], a.shape[2],
                                        a.grad.data());
                break;
            case OpKind::ConcatChannels: {
                Tensor<T>& b = slot(n.b);
                for (std::size_t i = 0; i < a.numel(); ++i) a.grad[i] += out.grad[i];
                for (std::size_t i = 0; i < b.numel(); ++i) b.grad[i] += out.grad[a.numel() + i];
                break;
            }
            case OpKind::Linear: {
                Tensor<T>& w = slot(n.w);
                ops::linear_backward(a.data.data(), a.shape[0], w.data.data(), w.shape[0],
                                     out.grad.data(), a.grad.data(),
                                     accumulate_param_grads ? w.grad.data() : nullptr,
                                     accumulate_param_grads ? slot(n.bias).grad.data() : nullptr);
                break;
            }
            case OpKind::Softmax:
                ops::softmax_backward(out.data.data(), out.grad.data(), a.shape[0], a.grad.data());
                break;
            case OpKind::MseReduce:
                ops::mse_backward(a.data.data(), slot(n.b).data.data(), a.numel(), out.grad[0],
                                  a.grad.data(), slot(n.b).grad.data());
                break;
            case OpKind::CrossEntropyReduce:
                ops::cross_entropy_backward(a.data.data(), slot(n.b).data.data(), a.shape[0],
                                            out.grad[0], a.grad.data(), slot(n.b).grad.data());
                break;
            case OpKind::NegEntropyReduce:
                ops::neg_entropy_backward(a.data.data(), a.shape[0], out.grad[0], a.grad.data());
                break;
        }
    }
}

template <typename T>
void Graph<T>::zero_param_grads() {
    for (int p : param_slots_) slot(p).zero_grad();
}

template <typename T>
void init_params(Graph<T>& graph, std::uint64_t seed) {
    Rng rng(seed);
    for (int p : graph.params()) {
        Tensor<T>& t = graph.slot(p);
        if (t.shape.size() >= 2) {
            const double fan_in = static_cast<double>(t.numel() / static_cast<std::size_t>(t.shape[0]));
            const double limit = std::sqrt(6.0 / fan_in);
            for (T& v : t.data) v = static_cast<T>(rng.uniform(-limit, limit));
        } else {
            std::fill(t.data.begin(), t.data.end(), T(0));
        }
    }
}

template <typename T>
void AdamState<T>::init_like(const Graph<T>& graph) {
    m.clear();
    v.clear();
    for (int p : graph.params()) {
        m.emplace_back(graph.slot(p).numel(), T(0));
        v.emplace_back(graph.slot(p).numel(), T(0));
    }
    t = 0;
}

template <typename T>
void adam_step(Graph<T>& graph, AdamState<T>& state, const AdamConfig& cfg,
               const std::vector<std::vector<T>>& grads) {
    const auto params = graph.params();
    if (!state.initialized()) state.init_like(graph);
    if (grads.size() != params.size()) throw StateError("adam_step: grads/params count mismatch");

    state.t += 1;
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T corr1 = T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(state.t)));
    const T corr2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(state.t)));
    const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<T>& p = graph.slot(params[pi]);
        const std::vector<T>& g = grads[pi];
        if (g.size() != p.numel()) throw StateError("adam_step: grad size mismatch for " +
                                                    graph.slot_name(params[pi]));
        std::vector<T>& m = state.m[pi];
        std::vector<T>& v = state.v[pi];
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(static_cast<double>(g[i])))
                throw NumericError("non-finite gradient in parameter " + graph.slot_name(params[pi]));
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            const T mhat = m[i] / corr1;
            const T vhat = v[i] / corr2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

template <typename T>
void GradBuffer<T>::init_like(const Graph<T>& graph) {
    sums.clear();
    for (int p : graph.params()) sums.emplace_back(graph.slot(p).numel(), T(0));
}

template <typename T>
void GradBuffer<T>::zero() {
    for (auto& s : sums) std::fill(s.begin(), s.end(), T(0));
}

template <typename T>
void GradBuffer<T>::add_from(const Graph<T>& graph) {
    const auto params = graph.params();
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const auto& g = graph.slot(params[pi]).grad;
        auto& s = sums[pi];
        for (std::size_t i = 0; i < s.size(); ++i) s[i] += g[i];
    }
}

template <typename T>
void GradBuffer<T>::scale(T factor) {
    for (auto& s : sums)
        for (T& v : s) v *= factor;
}

GradCheckReport gradient_check(Graph<double>& graph, double epsilon, std::uint64_t cotangent_seed,
                               const std::string& negative_control) {
    // Fixed cotangent: phi = sum_k u_k * out_k over all marked outputs.
    Rng cot(cotangent_seed);
    std::vector<std::vector<double>> u;
    for (int out : graph.outputs()) {
        u.emplace_back(graph.slot(out).numel());
        for (double& v : u.back()) v = cot.uniform(-1.0, 1.0);
    }

    auto phi = [&]() {
        graph.forward();
        double s = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) {
            const auto& data = graph.slot(graph.outputs()[static_cast<std::ptrdiff_t>(k)]).data;
            for (std::size_t i = 0; i < data.size(); ++i) s += u[k][i] * data[i];
        }
        return s;
    };

    phi();  // populate activations
    for (std::size_t k = 0; k < u.size(); ++k) {
        auto& g = graph.slot(graph.outputs()[static_cast<std::ptrdiff_t>(k)]).grad;
        std::copy(u[k].begin(), u[k].end(), g.begin());
    }
    graph.backward(true);

    // Snapshot analytic gradients for every checked slot.
    std::vector<int> checked_slots;
    for (int p : graph.params()) checked_slots.push_back(p);
    for (int in : graph.inputs()) checked_slots.push_back(in);

    std::vector<std::vector<double>> analytic;
    for (int id : checked_slots) {
        analytic.push_back(graph.slot(id).grad);
        if (!negative_control.empty() && graph.slot_name(id) == negative_control)
            for (double& v : analytic.back()) v = -v;
    }

    GradCheckReport report;
    for (std::size_t si = 0; si < checked_slots.size(); ++si) {
        Tensor<double>& t = graph.slot(checked_slots[si]);
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const double orig = t.data[i];
            t.data[i] = orig + epsilon;
            const double hi = phi();
            t.data[i] = orig - epsilon;
            const double lo = phi();
            t.data[i] = orig;

            const double numeric = (hi - lo) / (2.0 * epsilon);
            const double a = analytic[si][i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-10});
            ++report.checked;
            if (rel > report.max_rel_err) report.max_rel_err = rel;
            if (rel > 1e-7) {
                report.worst.push_back({graph.slot_name(checked_slots[si]), i, a, numeric, rel});
            }
        }
    }
    std::sort(report.worst.begin(), report.worst.end(),
              [](const GradCheckIssue& x, const GradCheckIssue& y) { return x.rel_err > y.rel_err; });
    if (report.worst.size() > 10) report.worst.resize(10);

    // Leave activations consistent with unperturbed values.
    graph.forward();
    return report;
}

// Explicit instantiations.
template class Graph<float>;
template class Graph<double>;
template void init_params<float>(Graph<float>&, std::uint64_t);
template void init_params<double>(Graph<double>&, std::uint64_t);
template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(Graph<float>&, AdamState<float>&, const AdamConfig&,
                               const std::vector<std::vector<float>>&);
template void adam_step<double>(Graph<double>&, AdamState<double>&, const AdamConfig&,
                                const std::vector<std::vector<double>>&);
template struct GradBuffer<float>;
template struct GradBuffer<double>;

}  // namespace uwie
