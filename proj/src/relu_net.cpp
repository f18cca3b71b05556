#include "svnet/relu_net.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace svnet {

// ============================================================================
// AffineLayer
// ============================================================================

AffineLayer AffineLayer::zero(int out, int in) {
    AffineLayer l;
    l.out_dim = out;
    l.in_dim = in;
    l.rows.resize(out);
    l.bias.assign(out, 0.0);
    return l;
}

AffineLayer AffineLayer::from_dense(const Matrix& a, const std::vector<double>& b) {
    const int out = static_cast<int>(a.size());
    const int in = out > 0 ? static_cast<int>(a[0].size()) : 0;
    AffineLayer l = zero(out, in);
    for (int r = 0; r < out; ++r) {
        if (static_cast<int>(a[r].size()) != in)
            throw std::invalid_argument("AffineLayer::from_dense: ragged matrix");
        for (int c = 0; c < in; ++c)
            if (a[r][c] != 0.0) l.rows[r].emplace_back(c, a[r][c]);
    }
    if (static_cast<int>(b.size()) != out)
        throw std::invalid_argument("AffineLayer::from_dense: bias length mismatch");
    l.bias = b;
    return l;
}

Matrix AffineLayer::dense_weights() const {
    Matrix a(out_dim, std::vector<double>(in_dim, 0.0));
    for (int r = 0; r < out_dim; ++r)
        for (const auto& [c, v] : rows[r]) a[r][c] = v;
    return a;
}

void AffineLayer::set(int r, int c, double v) {
    auto& row = rows[r];
    auto it = std::lower_bound(row.begin(), row.end(), c,
                               [](const auto& p, int col) { return p.first < col; });
    if (it != row.end() && it->first == c) {
        if (v == 0.0)
            row.erase(it);
        else
            it->second = v;
    } else if (v != 0.0) {
        row.insert(it, {c, v});
    }
}

double AffineLayer::get(int r, int c) const {
    const auto& row = rows[r];
    auto it = std::lower_bound(row.begin(), row.end(), c,
                               [](const auto& p, int col) { return p.first < col; });
    return (it != row.end() && it->first == c) ? it->second : 0.0;
}

std::int64_t AffineLayer::weight_nnz() const {
    std::int64_t n = 0;
    for (const auto& row : rows) n += static_cast<std::int64_t>(row.size());
    return n;
}

std::int64_t AffineLayer::bias_nnz() const {
    std::int64_t n = 0;
    for (double b : bias)
        if (b != 0.0) ++n;
    return n;
}

void AffineLayer::apply(const double* x, double* out) const {
    for (int r = 0; r < out_dim; ++r) {
        double acc = bias[r];
        for (const auto& [c, v] : rows[r]) acc += v * x[c];
        out[r] = acc;
    }
}

// ============================================================================
// ReluNetwork
// ============================================================================

ReluNetwork::ReluNetwork(std::vector<AffineLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw std::invalid_argument("ReluNetwork: needs at least one layer");
    for (std::size_t l = 1; l < layers_.size(); ++l)
        if (layers_[l].in_dim != layers_[l - 1].out_dim)
            throw std::invalid_argument("ReluNetwork: inconsistent layer dimensions");
}

std::vector<double> ReluNetwork::evaluate(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != input_dim())
        throw std::invalid_argument("ReluNetwork::evaluate: input dimension mismatch");
    std::vector<double> a, b, out;
    evaluate_into(x.data(), a, b, out);
    return out;
}

void ReluNetwork::evaluate_into(const double* x, std::vector<double>& a,
                                std::vector<double>& b, std::vector<double>& out) const {
    const std::size_t n = layers_.size();
    const double* cur = x;
    for (std::size_t l = 0; l + 1 < n; ++l) {
        std::vector<double>& dst = (l % 2 == 0) ? a : b;
        dst.resize(layers_[l].out_dim);
        layers_[l].apply(cur, dst.data());
        for (double& v : dst) v = v > 0.0 ? v : 0.0;
        cur = dst.data();
    }
    out.resize(layers_.back().out_dim);
    layers_.back().apply(cur, out.data());
}

NetMetrics metrics(const ReluNetwork& net) {
    NetMetrics m;
    m.depth = net.affine_count() + 1;
    m.width = net.input_dim();
    for (const auto& l : net.layers()) {
        m.size += l.nnz();
        m.width = std::max(m.width, l.out_dim);
    }
    m.size_out = net.layers().back().nnz();
    return m;
}

// ============================================================================
// Elementary networks
// ============================================================================

ReluNetwork identity_net(int d, int l) {
    if (d < 1) throw std::invalid_argument("identity_net: d must be >= 1");
    if (l < 2) throw std::invalid_argument("identity_net: depth must be >= 2");
    std::vector<AffineLayer> layers;
    if (l == 2) {
        AffineLayer a = AffineLayer::zero(d, d);
        for (int i = 0; i < d; ++i) a.set(i, i, 1.0);
        layers.push_back(std::move(a));
        return ReluNetwork(std::move(layers));
    }
    // split into (x^+, (-x)^+), carry through l-3 hidden identities, re-join;
    // relu(x) - relu(-x) recovers x exactly for every real input
    AffineLayer split = AffineLayer::zero(2 * d, d);
    for (int i = 0; i < d; ++i) {
        split.set(i, i, 1.0);
        split.set(d + i, i, -1.0);
    }
    layers.push_back(std::move(split));
    for (int k = 0; k < l - 3; ++k) {
        AffineLayer mid = AffineLayer::zero(2 * d, 2 * d);
        for (int i = 0; i < 2 * d; ++i) mid.set(i, i, 1.0);
        layers.push_back(std::move(mid));
    }
    AffineLayer join = AffineLayer::zero(d, 2 * d);
    for (int i = 0; i < d; ++i) {
        join.set(i, i, 1.0);
        join.set(i, d + i, -1.0);
    }
    layers.push_back(std::move(join));
    return ReluNetwork(std::move(layers));
}

ReluNetwork linear_net(const Matrix& a, const std::vector<double>& b) {
    std::vector<AffineLayer> layers;
    layers.push_back(AffineLayer::from_dense(a, b));
    return ReluNetwork(std::move(layers));
}

ReluNetwork selector_net(const std::vector<int>& indices, int in_dim) {
    AffineLayer l = AffineLayer::zero(static_cast<int>(indices.size()), in_dim);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] < 0 || indices[r] >= in_dim)
            throw std::invalid_argument("selector_net: index out of range");
        l.set(static_cast<int>(r), indices[r], 1.0);
    }
    std::vector<AffineLayer> layers;
    layers.push_back(std::move(l));
    return ReluNetwork(std::move(layers));
}

ReluNetwork zero_net(int in_dim, int out_dim) {
    std::vector<AffineLayer> layers;
    layers.push_back(AffineLayer::zero(out_dim, in_dim));
    return ReluNetwork(std::move(layers));
}

// ============================================================================
// Parallelization
// ============================================================================

namespace {

// shift a layer's rows/columns into a block of the combined layer
void place_block(AffineLayer& dst, const AffineLayer& src, int row_off, int col_off) {
    for (int r = 0; r < src.out_dim; ++r) {
        for (const auto& [c, v] : src.rows[r]) dst.rows[row_off + r].emplace_back(col_off + c, v);
        dst.bias[row_off + r] = src.bias[r];
    }
}

void check_equal_depths(const std::vector<ReluNetwork>& nets, const char* who) {
    if (nets.empty()) throw std::invalid_argument(std::string(who) + ": empty list");
    for (const auto& n : nets)
        if (n.affine_count() != nets.front().affine_count())
            throw std::invalid_argument(std::string(who) +
                                        ": members must have equal depth (pad with identity_net)");
}

} // namespace

ReluNetwork parallelize(const std::vector<ReluNetwork>& nets) {
    check_equal_depths(nets, "parallelize");
    const int nl = nets.front().affine_count();
    std::vector<AffineLayer> layers;
    layers.reserve(nl);
    for (int l = 0; l < nl; ++l) {
        int out = 0, in = 0;
        for (const auto& n : nets) {
            out += n.layers()[l].out_dim;
            in += n.layers()[l].in_dim;
        }
        AffineLayer combined = AffineLayer::zero(out, in);
        int ro = 0, co = 0;
        for (const auto& n : nets) {
            place_block(combined, n.layers()[l], ro, co);
            ro += n.layers()[l].out_dim;
            co += n.layers()[l].in_dim;
        }
        layers.push_back(std::move(combined));
    }
    return ReluNetwork(std::move(layers));
}

ReluNetwork parallelize_shared(const std::vector<ReluNetwork>& nets,
                               const std::vector<std::vector<int>>& input_map, int in_dim) {
    check_equal_depths(nets, "parallelize_shared");
    if (input_map.size() != nets.size())
        throw std::invalid_argument("parallelize_shared: one input map per member required");
    const int nl = nets.front().affine_count();
    std::vector<AffineLayer> layers;
    layers.reserve(nl);
    for (int l = 0; l < nl; ++l) {
        int out = 0, in = 0;
        for (const auto& n : nets) {
            out += n.layers()[l].out_dim;
            if (l > 0) in += n.layers()[l].in_dim;
        }
        if (l == 0) in = in_dim;
        AffineLayer combined = AffineLayer::zero(out, in);
        int ro = 0, co = 0;
        for (std::size_t i = 0; i < nets.size(); ++i) {
            const AffineLayer& src = nets[i].layers()[l];
            if (l == 0) {
                const auto& map = input_map[i];
                if (static_cast<int>(map.size()) != src.in_dim)
                    throw std::invalid_argument("parallelize_shared: map length != member input dim");
                for (int r = 0; r < src.out_dim; ++r) {
                    // accumulate via std::map in case two member inputs alias one source
                    std::map<int, double> acc;
                    for (const auto& [c, v] : src.rows[r]) {
                        const int mc = map[c];
                        if (mc < 0 || mc >= in_dim)
                            throw std::invalid_argument("parallelize_shared: map index out of range");
                        acc[mc] += v;
                    }
                    for (const auto& [c, v] : acc)
                        if (v != 0.0) combined.rows[ro + r].emplace_back(c, v);
                    combined.bias[ro + r] = src.bias[r];
                }
            } else {
                place_block(combined, src, ro, co);
                co += src.in_dim;
            }
            ro += src.out_dim;
        }
        layers.push_back(std::move(combined));
    }
    return ReluNetwork(std::move(layers));
}

// ============================================================================
// Composition
// ============================================================================

ReluNetwork compose(const ReluNetwork& outer, const ReluNetwork& inner) {
    if (inner.output_dim() != outer.input_dim())
        throw std::invalid_argument("compose: inner output dim != outer input dim");
    const auto& il = inner.layers();
    const auto& ol = outer.layers();
    std::vector<AffineLayer> layers;
    layers.reserve(il.size() + ol.size());
    for (std::size_t l = 0; l + 1 < il.size(); ++l) layers.push_back(il[l]);

    // junction: duplicate the inner head as (z, -z) so ReLU keeps both halves,
    // then the outer head reads z back as (z^+) - ((-z)^+)
    const AffineLayer& last_in = il.back();
    AffineLayer split = AffineLayer::zero(2 * last_in.out_dim, last_in.in_dim);
    for (int r = 0; r < last_in.out_dim; ++r) {
        for (const auto& [c, v] : last_in.rows[r]) {
            split.rows[r].emplace_back(c, v);
            split.rows[last_in.out_dim + r].emplace_back(c, -v);
        }
        split.bias[r] = last_in.bias[r];
        split.bias[last_in.out_dim + r] = -last_in.bias[r];
    }
    layers.push_back(std::move(split));

    const AffineLayer& first_out = ol.front();
    AffineLayer bridge = AffineLayer::zero(first_out.out_dim, 2 * last_in.out_dim);
    for (int r = 0; r < first_out.out_dim; ++r) {
        for (const auto& [c, v] : first_out.rows[r]) {
            bridge.rows[r].emplace_back(c, v);
            bridge.rows[r].emplace_back(last_in.out_dim + c, -v);
        }
        std::sort(bridge.rows[r].begin(), bridge.rows[r].end());
        bridge.bias[r] = first_out.bias[r];
    }
    layers.push_back(std::move(bridge));

    for (std::size_t l = 1; l < ol.size(); ++l) layers.push_back(ol[l]);
    return ReluNetwork(std::move(layers));
}

namespace {

// exact product (A2 x + b2) o (A1 x + b1) = A2 A1 x + (A2 b1 + b2)
AffineLayer merge_affine(const AffineLayer& second, const AffineLayer& first) {
    AffineLayer m = AffineLayer::zero(second.out_dim, first.in_dim);
    for (int r = 0; r < second.out_dim; ++r) {
        std::map<int, double> acc;
        double b = second.bias[r];
        for (const auto& [k, v] : second.rows[r]) {
            b += v * first.bias[k];
            for (const auto& [c, w] : first.rows[k]) acc[c] += v * w;
        }
        for (const auto& [c, v] : acc)
            if (v != 0.0) m.rows[r].emplace_back(c, v);
        m.bias[r] = b;
    }
    return m;
}

} // namespace

ReluNetwork compose_fused(const ReluNetwork& outer, const ReluNetwork& inner) {
    if (inner.output_dim() != outer.input_dim())
        throw std::invalid_argument("compose_fused: inner output dim != outer input dim");
    std::vector<AffineLayer> layers;
    const auto& il = inner.layers();
    const auto& ol = outer.layers();
    for (std::size_t l = 0; l + 1 < il.size(); ++l) layers.push_back(il[l]);
    layers.push_back(merge_affine(ol.front(), il.back()));
    for (std::size_t l = 1; l < ol.size(); ++l) layers.push_back(ol[l]);
    return ReluNetwork(std::move(layers));
}

ReluNetwork precompose_affine(const ReluNetwork& net, const AffineLayer& aff) {
    if (aff.out_dim != net.input_dim())
        throw std::invalid_argument("precompose_affine: dimension mismatch");
    std::vector<AffineLayer> layers = net.layers();
    layers.front() = merge_affine(layers.front(), aff);
    return ReluNetwork(std::move(layers));
}

ReluNetwork postcompose_affine(const AffineLayer& aff, const ReluNetwork& net) {
    if (aff.in_dim != net.output_dim())
        throw std::invalid_argument("postcompose_affine: dimension mismatch");
    std::vector<AffineLayer> layers = net.layers();
    layers.back() = merge_affine(aff, layers.back());
    return ReluNetwork(std::move(layers));
}

// ============================================================================
// Weighted sums
// ============================================================================

ReluNetwork weighted_sum(const std::vector<ReluNetwork>& nets, const std::vector<double>& weights) {
    check_equal_depths(nets, "weighted_sum");
    if (nets.size() != weights.size())
        throw std::invalid_argument("weighted_sum: one weight per network required");
    const int in = nets.front().input_dim();
    const int out = nets.front().output_dim();
    for (const auto& n : nets)
        if (n.input_dim() != in || n.output_dim() != out)
            throw std::invalid_argument("weighted_sum: members must share input and output dims");

    const int nl = nets.front().affine_count();
    if (nl == 1) {
        AffineLayer sum = AffineLayer::zero(out, in);
        for (int r = 0; r < out; ++r) {
            std::map<int, double> acc;
            double b = 0.0;
            for (std::size_t i = 0; i < nets.size(); ++i) {
                const AffineLayer& l = nets[i].layers()[0];
                for (const auto& [c, v] : l.rows[r]) acc[c] += weights[i] * v;
                b += weights[i] * l.bias[r];
            }
            for (const auto& [c, v] : acc)
                if (v != 0.0) sum.rows[r].emplace_back(c, v);
            sum.bias[r] = b;
        }
        std::vector<AffineLayer> layers;
        layers.push_back(std::move(sum));
        return ReluNetwork(std::move(layers));
    }

    std::vector<AffineLayer> layers;
    layers.reserve(nl);
    for (int l = 0; l + 1 < nl; ++l) {
        int lo = 0, li = 0;
        for (const auto& n : nets) {
            lo += n.layers()[l].out_dim;
            if (l > 0) li += n.layers()[l].in_dim;
        }
        if (l == 0) li = in;
        AffineLayer combined = AffineLayer::zero(lo, li);
        int ro = 0, co = 0;
        for (const auto& n : nets) {
            // first hidden layer reads the shared input without column offset
            place_block(combined, n.layers()[l], ro, l == 0 ? 0 : co);
            ro += n.layers()[l].out_dim;
            co += n.layers()[l].in_dim;
        }
        layers.push_back(std::move(combined));
    }
    // merged final layer: horizontal concatenation of w_i * A_i^L, bias sum
    int penult = 0;
    for (const auto& n : nets) penult += n.layers()[nl - 1].in_dim;
    AffineLayer fin = AffineLayer::zero(out, penult);
    std::vector<double> bias_acc(out, 0.0);
    int co = 0;
    for (std::size_t i = 0; i < nets.size(); ++i) {
        const AffineLayer& l = nets[i].layers()[nl - 1];
        for (int r = 0; r < out; ++r) {
            for (const auto& [c, v] : l.rows[r]) {
                const double w = weights[i] * v;
                if (w != 0.0) fin.rows[r].emplace_back(co + c, w);
            }
            bias_acc[r] += weights[i] * l.bias[r];
        }
        co += l.in_dim;
    }
    fin.bias = std::move(bias_acc);
    layers.push_back(std::move(fin));
    return ReluNetwork(std::move(layers));
}

// ============================================================================
// min / max
// ============================================================================

// min(x,n) = ((x+n)^+ - (-x-n)^+ - (x-n)^+ - (n-x)^+) / 2
ReluNetwork min_net(double n) {
    Matrix a1 = {{1.0}, {-1.0}, {1.0}, {-1.0}};
    std::vector<double> b1 = {n, -n, -n, n};
    Matrix a2 = {{0.5, -0.5, -0.5, -0.5}};
    std::vector<double> b2 = {0.0};
    std::vector<AffineLayer> layers;
    layers.push_back(AffineLayer::from_dense(a1, b1));
    layers.push_back(AffineLayer::from_dense(a2, b2));
    return ReluNetwork(std::move(layers));
}

// max(x,n) = -((-x-n)^+ - (x+n)^+ - (n-x)^+ - (x-n)^+) / 2
ReluNetwork max_net(double n) {
    Matrix a1 = {{-1.0}, {1.0}, {-1.0}, {1.0}};
    std::vector<double> b1 = {-n, n, n, -n};
    Matrix a2 = {{-0.5, 0.5, 0.5, 0.5}};
    std::vector<double> b2 = {0.0};
    std::vector<AffineLayer> layers;
    layers.push_back(AffineLayer::from_dense(a1, b1));
    layers.push_back(AffineLayer::from_dense(a2, b2));
    return ReluNetwork(std::move(layers));
}

ReluNetwork pad_to_depth(const ReluNetwork& net, int target_depth) {
    const int depth = net.affine_count() + 1;
    if (target_depth < depth)
        throw std::invalid_argument("pad_to_depth: target shallower than network");
    if (target_depth == depth) return net;
    return compose(identity_net(net.output_dim(), target_depth - depth + 1), net);
}

// ============================================================================
// JSON serialization
// ============================================================================

std::string network_to_json(const ReluNetwork& net) {
    nlohmann::json j;
    j["layers"] = nlohmann::json::array();
    for (const auto& l : net.layers()) {
        nlohmann::json jl;
        jl["weights"] = l.dense_weights();
        jl["bias"] = l.bias;
        j["layers"].push_back(std::move(jl));
    }
    return j.dump();
}

ReluNetwork network_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    std::vector<AffineLayer> layers;
    for (const auto& jl : j.at("layers")) {
        const Matrix a = jl.at("weights").get<Matrix>();
        const std::vector<double> b = jl.at("bias").get<std::vector<double>>();
        layers.push_back(AffineLayer::from_dense(a, b));
    }
    return ReluNetwork(std::move(layers));
}

} // namespace svnet
