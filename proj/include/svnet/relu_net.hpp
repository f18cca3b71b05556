#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace svnet {

// Dense row-major matrix view used at construction and serialization
// boundaries. Internally layers keep sparse rows; exact zeros are never
// stored, so size() counts nonzero parameters by plain enumeration.
using Matrix = std::vector<std::vector<double>>;

// ============================================================================
// AffineLayer: x |-> Ax + b with sparse rows
// ============================================================================

struct AffineLayer {
    int out_dim = 0;
    int in_dim = 0;
    // rows[r] = sorted (column, value) pairs, value != 0
    std::vector<std::vector<std::pair<int, double>>> rows;
    std::vector<double> bias; // dense; zero entries do not count toward size

    static AffineLayer zero(int out, int in);
    static AffineLayer from_dense(const Matrix& a, const std::vector<double>& b);

    Matrix dense_weights() const;

    void set(int r, int c, double v); // v == 0 removes the entry
    double get(int r, int c) const;

    std::int64_t weight_nnz() const;
    std::int64_t bias_nnz() const;
    std::int64_t nnz() const { return weight_nnz() + bias_nnz(); }

    void apply(const double* x, double* out) const;
};

// ============================================================================
// ReluNetwork: W_L o (relu o W_{L-1}) o ... o (relu o W_1)
//
// Conventions: depth = L + 1 (number of affine maps plus one); width is the
// maximum of the input dimension and every layer output dimension; size is
// the exact count of nonzero weight and bias entries; size_out counts only
// the final layer. ReLU is applied between consecutive affine maps and never
// after the last one.
// ============================================================================

class ReluNetwork {
public:
    ReluNetwork() = default;
    explicit ReluNetwork(std::vector<AffineLayer> layers);

    int input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim; }
    int output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim; }
    int affine_count() const { return static_cast<int>(layers_.size()); }

    const std::vector<AffineLayer>& layers() const { return layers_; }
    std::vector<AffineLayer>& mutable_layers() { return layers_; }

    std::vector<double> evaluate(const std::vector<double>& x) const;

    // Scratch-buffer variant for hot loops; buffers are resized as needed.
    void evaluate_into(const double* x, std::vector<double>& a,
                       std::vector<double>& b, std::vector<double>& out) const;

private:
    std::vector<AffineLayer> layers_;
};

struct NetMetrics {
    std::int64_t size = 0;
    int depth = 0;
    int width = 0;
    std::int64_t size_out = 0;
};

NetMetrics metrics(const ReluNetwork& net);

// ============================================================================
// Structural constructions
// ============================================================================

// Exact identity on R^d with depth l (l >= 2). l == 2 is a single affine
// identity map; deeper variants carry the value through hidden layers as the
// (x^+, (-x)^+) split. size <= 2 d l always holds.
ReluNetwork identity_net(int d, int l);

// Single affine map x |-> Ax + b (depth 2).
ReluNetwork linear_net(const Matrix& a, const std::vector<double>& b);

// Rows of an identity-like 0/1 matrix picking out coordinates `indices` from
// an input of dimension in_dim.
ReluNetwork selector_net(const std::vector<int>& indices, int in_dim);

// Depth-2 network computing the zero map (size 0).
ReluNetwork zero_net(int in_dim, int out_dim);

// Block-diagonal parallelization on the concatenated input
// (x_1,...,x_n) |-> (net_1(x_1),...,net_n(x_n)). All depths must match;
// size is exactly the sum of member sizes.
ReluNetwork parallelize(const std::vector<ReluNetwork>& nets);

// Parallelization where all members read from one shared input vector:
// member i's input coordinate j is common-input coordinate input_map[i][j].
// Outputs are concatenated in order. Sizes still add (first-layer columns are
// re-addressed, possibly merged if a member reads one source twice).
ReluNetwork parallelize_shared(const std::vector<ReluNetwork>& nets,
                               const std::vector<std::vector<int>>& input_map,
                               int in_dim);

// Composition outer o inner realized with the (z^+, (-z)^+) junction splice,
// so depth = depth(outer) + depth(inner) - 1 and both displayed size bounds
// hold: size <= 2(size(outer)+size(inner)) and
// size <= 2 size(outer) + size_out(inner) + size(inner).
ReluNetwork compose(const ReluNetwork& outer, const ReluNetwork& inner);

// Performance-only composition that multiplies the junction affine maps
// instead of splicing. Exact semantics, smaller network, but the depth/size
// laws above do not apply; never used where those laws are audited.
ReluNetwork compose_fused(const ReluNetwork& outer, const ReluNetwork& inner);

// Exact affine pre/post-composition by merging into the first/last layer.
// No depth change; used for input routing (selectors) and output embedding.
ReluNetwork precompose_affine(const ReluNetwork& net, const AffineLayer& aff);
ReluNetwork postcompose_affine(const AffineLayer& aff, const ReluNetwork& net);

// x |-> sum_i w_i net_i(x) for networks of equal depth, input dim and output
// dim; the final layers are merged so size <= sum_i size(net_i).
ReluNetwork weighted_sum(const std::vector<ReluNetwork>& nets,
                         const std::vector<double>& weights);

// Exact scalar min(x, n) / max(x, n): one hidden layer of four units with the
// closed-form weights; size <= 12 with equality iff n != 0.
ReluNetwork min_net(double n);
ReluNetwork max_net(double n);

// Pad to target depth by composing an identity network on the output side.
ReluNetwork pad_to_depth(const ReluNetwork& net, int target_depth);

// ============================================================================
// Serialization: {"layers":[{"weights":[[...]],"bias":[...]},...]},
// row-major dense weights, doubles emitted so that parsing returns the exact
// bit pattern (shortest round-trip form).
// ============================================================================

std::string network_to_json(const ReluNetwork& net);
ReluNetwork network_from_json(const std::string& text);

} // namespace svnet
