#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uwie/tensor.hpp"

namespace uwie {

enum class OpKind {
    Conv2d,
    LeakyRelu,
    Sigmoid,
    MaxPool2,
    Upsample2,
    ConcatChannels,
    Linear,
    GlobalAvgPool,
    Softmax,
    MseReduce,
    CrossEntropyReduce,
    NegEntropyReduce,
};

const char* op_kind_name(OpKind kind);

// Static computation graph over the fixed op vocabulary. Nodes are appended
// in execution order (so the list is already topological); forward() retains
// every activation and backward() walks the list in reverse, accumulating
// into the .grad buffers of all slots.
//
// Slots are plain indices into an internal tensor table; inputs, parameters
// and op outputs all live there. Callers stage input values and output
// gradients directly through slot().
//
// A Graph instance is confined to one thread while a step is in flight; the
// kernels it calls parallelize internally.
template <typename T>
class Graph {
public:
    int add_input(const std::string& name, std::vector<int> shape);
    int add_param(const std::string& name, std::vector<int> shape);

    // w/bias are param slots created via add_param; shapes are validated.
    int conv2d(int x, int w, int bias, int stride = 1, int pad = 1);
    int leaky_relu(int x, double slope);
    int sigmoid(int x);
    int max_pool2(int x);
    int upsample2(int x);
    int concat_channels(int a, int b);
    int linear(int x, int w, int bias);
    int global_avg_pool(int x);
    int softmax(int x);
    int mse(int pred, int target);
    int cross_entropy(int probs, int onehot);
    int neg_entropy(int probs);

    void mark_output(int slot);

    Tensor<T>& slot(int id) { return slots_[static_cast<std::size_t>(id)]; }
    const Tensor<T>& slot(int id) const { return slots_[static_cast<std::size_t>(id)]; }
    const std::string& slot_name(int id) const { return names_[static_cast<std::size_t>(id)]; }

    std::span<const int> inputs() const { return input_slots_; }
    std::span<const int> params() const { return param_slots_; }
    std::span<const int> outputs() const { return output_slots_; }

    void forward();

    // Consumes the output gradients staged in slot(out).grad for every marked
    // output; all other gradients are zeroed first. When
    // accumulate_param_grads is false the parameter .grad buffers are left
    // exactly zero (forward-only use of this network in a larger loss).
    void backward(bool accumulate_param_grads = true);

    bool forward_done() const { return forward_done_; }

    void zero_param_grads();

private:
    struct Node {
        OpKind kind{};
        int a = -1, b = -1;
        int w = -1, bias = -1;
        int out = -1;
        int stride = 1, pad = 0;
        double slope = 0.0;
        std::vector<int> aux;  // pool argmax
        std::string label;
    };

    int new_slot(const std::string& name, std::vector<int> shape);
    const std::vector<int>& shape_of(int id) const { return slots_[static_cast<std::size_t>(id)].shape; }
    [[noreturn]] void shape_fail(const std::string& label, const std::string& what) const;

    std::vector<Tensor<T>> slots_;
    std::vector<std::string> names_;
    std::vector<Node> nodes_;
    std::vector<int> input_slots_, param_slots_, output_slots_;
    bool forward_done_ = false;
    int op_counter_ = 0;
};

// He-uniform initialization: weights (ndim >= 2) ~ U[-L, L] with
// L = sqrt(6 / fan_in); biases zero. Deterministic in registration order.
template <typename T>
void init_params(Graph<T>& graph, std::uint64_t seed);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    std::vector<std::vector<T>> m, v;
    std::int64_t t = 0;

    void init_like(const Graph<T>& graph);
    bool initialized() const { return !m.empty(); }
};

// One Adam update over the graph's parameters from `grads` (one vector per
// param slot, e.g. a batch-mean accumulator). Rejects non-finite gradients.
template <typename T>
void adam_step(Graph<T>& graph, AdamState<T>& state, const AdamConfig& cfg,
               const std::vector<std::vector<T>>& grads);

// Gradient accumulator aligned with graph.params().
template <typename T>
struct GradBuffer {
    std::vector<std::vector<T>> sums;

    void init_like(const Graph<T>& graph);
    void zero();
    void add_from(const Graph<T>& graph);          // += current param .grad
    void scale(T factor);
};

struct GradCheckIssue {
    std::string name;       // param or input name
    std::size_t index = 0;  // flat element index
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::vector<GradCheckIssue> worst;  // top offenders, descending

    bool passed(double tolerance) const { return max_rel_err <= tolerance; }
};

// Central-difference verification of every parameter and input element
// against the analytic backward pass. The scalar objective is a fixed
// pseudo-random weighting of all marked outputs (seeded, so reproducible).
// `negative_control` names a parameter whose analytic gradient is
// sign-flipped before comparison, to prove the check can fail.
GradCheckReport gradient_check(Graph<double>& graph, double epsilon = 1e-4,
                               std::uint64_t cotangent_seed = 7,
                               const std::string& negative_control = "");

}  // namespace uwie
