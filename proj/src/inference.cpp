#include "bam/inference.hpp"

#include <algorithm>
#include <string>

#include "bam/errors.hpp"

namespace bam {

namespace {

using P2 = std::array<double, 2>;  // {negative, positive}

constexpr P2 kOnes{1.0, 1.0};

P2 mul(const P2& a, const P2& b) { return {a[0] * b[0], a[1] * b[1]}; }

// Rescales so the larger entry is 1; keeps long products away from underflow.
P2 rescale(P2 v) {
    double m = std::max(v[0], v[1]);
    if (m > 0.0) {
        v[0] /= m;
        v[1] /= m;
    }
    return v;
}

P2 normalize(P2 v) {
    double s = v[0] + v[1];
    if (!(s > 0.0)) throw ImpossibleEvidence();
    return {v[0] / s, v[1] / s};
}

std::vector<P2> local_evidence(const Bat& bat, std::span<const EvidenceItem> evidence) {
    std::vector<P2> local(bat.size(), kOnes);
    std::vector<const EvidenceItem*> seen(bat.size(), nullptr);
    for (const auto& e : evidence) {
        if (e.node >= bat.size()) throw InvalidArgument("evidence on unknown node " + std::to_string(e.node));
        if (e.mode == EvidenceMode::Soft && !(e.p >= 0.0 && e.p <= 1.0)) {
            throw InvalidArgument("soft evidence probability must lie in [0,1]");
        }
        if (const auto* prev = seen[e.node]) {
            if (*prev == e) continue;
            throw ContradictoryEvidence("conflicting evidence on node " + std::to_string(e.node));
        }
        seen[e.node] = &e;
        local[e.node] = e.likelihood();
    }
    return local;
}

// Pearl's belief propagation on a polytree, two passes over a spanning
// traversal of each connected component. Edge e is the e-th entry of the
// flat parent array: parent bat.parents(child)[e - firstParent] -> child.
class Propagator {
public:
    Propagator(const Bat& bat, std::vector<P2> local)
        : bat_(bat), n_(bat.size()), edges_(bat.edge_count()), local_(std::move(local)),
          piMsg_(edges_, P2{0.5, 0.5}), lambdaMsg_(edges_, kOnes) {
        edgeChild_.resize(edges_);
        childStart_.assign(n_ + 1, 0);
        for (BatNodeId v = 0; v < n_; ++v) {
            const auto& node = bat_.node(v);
            for (std::uint32_t i = 0; i < node.numParents; ++i) {
                edgeChild_[node.firstParent + i] = v;
                ++childStart_[bat_.parents(v)[i] + 1];
            }
        }
        for (std::size_t v = 0; v < n_; ++v) childStart_[v + 1] += childStart_[v];
        childEdges_.resize(edges_);
        std::vector<std::uint32_t> fill(childStart_.begin(), childStart_.end() - 1);
        for (std::uint32_t e = 0; e < edges_; ++e) {
            BatNodeId parent = parent_of(e);
            childEdges_[fill[parent]++] = e;
        }
    }

    Marginals run() {
        traverse();
        for (auto it = order_.rbegin(); it != order_.rend(); ++it) process(*it, true);
        for (BatNodeId v : order_) process(v, false);

        Marginals out(n_);
        for (BatNodeId v = 0; v < n_; ++v) {
            P2 lam = local_[v];
            for (auto e : child_edges(v)) lam = rescale(mul(lam, lambdaMsg_[e]));
            P2 bel = normalize(mul(lam, pi_of(v)));
            out[v] = bel[1];
        }
        return out;
    }

private:
    BatNodeId parent_of(std::uint32_t e) const { return bat_.parents(edgeChild_[e])[e - bat_.node(edgeChild_[e]).firstParent]; }

    std::span<const std::uint32_t> child_edges(BatNodeId v) const {
        return std::span<const std::uint32_t>(childEdges_).subspan(childStart_[v], childStart_[v + 1] - childStart_[v]);
    }

    // Iterative DFS over the undirected skeleton; records pre-order and the
    // edge towards each node's traversal parent.
    void traverse() {
        constexpr std::uint32_t kNone = ~0u;
        treeEdge_.assign(n_, kNone);
        std::vector<bool> seen(n_, false);
        order_.clear();
        order_.reserve(n_);
        std::vector<BatNodeId> stack;
        for (BatNodeId start = 0; start < n_; ++start) {
            if (seen[start]) continue;
            seen[start] = true;
            stack.push_back(start);
            while (!stack.empty()) {
                BatNodeId v = stack.back();
                stack.pop_back();
                order_.push_back(v);
                const auto& node = bat_.node(v);
                for (std::uint32_t i = 0; i < node.numParents; ++i) {
                    std::uint32_t e = node.firstParent + i;
                    BatNodeId p = bat_.parents(v)[i];
                    if (seen[p]) continue;
                    seen[p] = true;
                    treeEdge_[p] = e;
                    stack.push_back(p);
                }
                for (auto e : child_edges(v)) {
                    BatNodeId c = edgeChild_[e];
                    if (seen[c]) continue;
                    seen[c] = true;
                    treeEdge_[c] = e;
                    stack.push_back(c);
                }
            }
        }
    }

    P2 pi_of(BatNodeId v) {
        const auto& node = bat_.node(v);
        const Cpt& cpt = bat_.cpt(v);
        const std::uint32_t np = node.numParents;
        auto pi = [&](std::uint32_t k) -> const P2& { return piMsg_[node.firstParent + k]; };
        return std::visit(
            [&](const auto& f) -> P2 {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, OrCpt>) {
                    double q = 1.0;
                    for (std::uint32_t k = 0; k < np; ++k) q *= pi(k)[0];
                    return {(1.0 - f.ifAny) * (1.0 - q) + (1.0 - f.ifNone) * q, f.ifAny * (1.0 - q) + f.ifNone * q};
                } else if constexpr (std::is_same_v<F, AndCpt>) {
                    double r = 1.0;
                    for (std::uint32_t k = 0; k < np; ++k) r *= pi(k)[1];
                    return {(1.0 - f.ifAll) * r + (1.0 - f.otherwise) * (1.0 - r), f.ifAll * r + f.otherwise * (1.0 - r)};
                } else {
                    P2 acc{0.0, 0.0};
                    const std::size_t rows = f.rows.size();
                    for (std::size_t m = 0; m < rows; ++m) {
                        double w = 1.0;
                        for (std::uint32_t k = 0; k < np; ++k) w *= pi(k)[(m >> k) & 1u];
                        acc[0] += w * (1.0 - f.rows[m]);
                        acc[1] += w * f.rows[m];
                    }
                    return acc;
                }
            },
            cpt.family());
    }

    // lambda message to parent `i` given the node's own lambda (evidence and children).
    P2 lambda_to_parent(BatNodeId v, std::uint32_t i, const P2& lam) {
        const auto& node = bat_.node(v);
        const Cpt& cpt = bat_.cpt(v);
        const std::uint32_t np = node.numParents;
        auto pi = [&](std::uint32_t k) -> const P2& { return piMsg_[node.firstParent + k]; };
        auto expect = [&](double p1) { return lam[1] * p1 + lam[0] * (1.0 - p1); };
        return std::visit(
            [&](const auto& f) -> P2 {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, OrCpt>) {
                    double q = 1.0;
                    for (std::uint32_t k = 0; k < np; ++k) {
                        if (k != i) q *= pi(k)[0];
                    }
                    double p1 = f.ifAny * (1.0 - q) + f.ifNone * q;
                    double p0 = (1.0 - f.ifAny) * (1.0 - q) + (1.0 - f.ifNone) * q;
                    return {lam[1] * p1 + lam[0] * p0, expect(f.ifAny)};
                } else if constexpr (std::is_same_v<F, AndCpt>) {
                    double r = 1.0;
                    for (std::uint32_t k = 0; k < np; ++k) {
                        if (k != i) r *= pi(k)[1];
                    }
                    double p1 = f.ifAll * r + f.otherwise * (1.0 - r);
                    double p0 = (1.0 - f.ifAll) * r + (1.0 - f.otherwise) * (1.0 - r);
                    return {expect(f.otherwise), lam[1] * p1 + lam[0] * p0};
                } else {
                    P2 acc{0.0, 0.0};
                    const std::size_t rows = f.rows.size();
                    for (std::size_t m = 0; m < rows; ++m) {
                        double w = 1.0;
                        for (std::uint32_t k = 0; k < np; ++k) {
                            if (k != i) w *= pi(k)[(m >> k) & 1u];
                        }
                        acc[(m >> i) & 1u] += w * expect(f.rows[m]);
                    }
                    return acc;
                }
            },
            cpt.family());
    }

    // Sends messages from v. Collect pass: only along its traversal edge.
    // Distribute pass: along every other edge.
    void process(BatNodeId v, bool collect) {
        const std::uint32_t tree = treeEdge_[v];
        if (collect && tree == ~0u) return;
        const auto& node = bat_.node(v);
        auto children = child_edges(v);
        const std::size_t nc = children.size();

        prefix_.resize(nc + 1);
        suffix_.resize(nc + 1);
        prefix_[0] = local_[v];
        for (std::size_t j = 0; j < nc; ++j) prefix_[j + 1] = rescale(mul(prefix_[j], lambdaMsg_[children[j]]));
        suffix_[nc] = kOnes;
        for (std::size_t j = nc; j-- > 0;) suffix_[j] = rescale(mul(lambdaMsg_[children[j]], suffix_[j + 1]));
        const P2 lam = prefix_[nc];

        const bool treeIsParentEdge = tree != ~0u && edgeChild_[tree] == v;

        for (std::uint32_t i = 0; i < node.numParents; ++i) {
            std::uint32_t e = node.firstParent + i;
            if (collect ? e != tree : e == tree) continue;
            lambdaMsg_[e] = normalize(lambda_to_parent(v, i, lam));
        }

        bool sendsDown = collect ? !treeIsParentEdge : nc > (tree != ~0u && !treeIsParentEdge ? 1u : 0u);
        if (!sendsDown) return;
        const P2 piV = pi_of(v);
        for (std::size_t j = 0; j < nc; ++j) {
            std::uint32_t e = children[j];
            if (collect ? e != tree : e == tree) continue;
            piMsg_[e] = normalize(mul(mul(prefix_[j], suffix_[j + 1]), piV));
        }
    }

    const Bat& bat_;
    std::size_t n_;
    std::uint32_t edges_;
    std::vector<P2> local_;
    std::vector<P2> piMsg_;
    std::vector<P2> lambdaMsg_;
    std::vector<BatNodeId> edgeChild_;
    std::vector<std::uint32_t> childStart_;
    std::vector<std::uint32_t> childEdges_;
    std::vector<std::uint32_t> treeEdge_;
    std::vector<BatNodeId> order_;
    std::vector<P2> prefix_;
    std::vector<P2> suffix_;
};

} // namespace

std::array<double, 2> EvidenceItem::likelihood() const {
    switch (mode) {
    case EvidenceMode::HardPositive: return {0.0, 1.0};
    case EvidenceMode::HardNegative: return {1.0, 0.0};
    case EvidenceMode::Soft: return {1.0 - p, p};
    }
    return {1.0, 1.0};
}

Marginals infer_marginals_unchecked(const Bat& bat, std::span<const EvidenceItem> evidence) {
    if (bat.edge_count() >= ~0u) throw InvalidArgument("BAT too large");
    return Propagator(bat, local_evidence(bat, evidence)).run();
}

Marginals infer_marginals(const Bat& bat, std::span<const EvidenceItem> evidence) {
    if (!validate_polytree(bat)) throw NotPolytree("belief propagation requires a polytree");
    return infer_marginals_unchecked(bat, evidence);
}

Marginals brute_force_marginals(const Bat& bat, std::span<const EvidenceItem> evidence) {
    const std::size_t n = bat.size();
    if (n > kMaxBruteForceNodes) {
        throw InvalidArgument("brute force limited to " + std::to_string(kMaxBruteForceNodes) + " nodes");
    }
    for (BatNodeId v = 0; v < n; ++v) {
        for (BatNodeId p : bat.parents(v)) {
            if (p >= n) throw InvalidArgument("dangling parent id");
        }
    }
    auto local = local_evidence(bat, evidence);
    std::vector<double> positive(n, 0.0);
    double total = 0.0;
    const std::uint64_t states = std::uint64_t{1} << n;
    for (std::uint64_t s = 0; s < states; ++s) {
        double w = 1.0;
        for (BatNodeId v = 0; v < n && w != 0.0; ++v) {
            auto parents = bat.parents(v);
            ParentMask mask = 0;
            for (std::size_t k = 0; k < parents.size(); ++k) {
                if ((s >> parents[k]) & 1u) mask |= ParentMask{1} << k;
            }
            double p1 = bat.cpt(v).probability(mask);
            unsigned x = (s >> v) & 1u;
            w *= (x ? p1 : 1.0 - p1) * local[v][x];
        }
        if (w == 0.0) continue;
        total += w;
        for (BatNodeId v = 0; v < n; ++v) {
            if ((s >> v) & 1u) positive[v] += w;
        }
    }
    if (!(total > 0.0)) throw ImpossibleEvidence();
    for (auto& p : positive) p /= total;
    return positive;
}

} // namespace bam
