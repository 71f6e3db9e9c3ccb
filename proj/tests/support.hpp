#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sf2f/autodiff.hpp"
#include "sf2f/nn.hpp"

namespace sf2f::testing {

template <typename T = double>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    std::normal_distribution<double> d(0.0, scale);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<T>(d(rng));
    return t;
}

struct GradCheckResult {
    double max_rel = 0.0;
    std::string worst;
};

/// Central differences with step h against reverse-mode gradients of the
/// scalar `loss(graph)` with respect to each leaf in `leaves`. The relative
/// error uses max(|analytic|, |numeric|, floor) as denominator.
inline GradCheckResult grad_check(const std::function<Var<double>(Graph<double>&)>& loss,
                                  std::vector<Var<double>*> leaves, double h = 1e-5, double floor = 1e-5,
                                  std::size_t max_entries = 64) {
    for (auto* v : leaves) {
        v->ensure_grad();
        v->zero_grad();
    }
    {
        Graph<double> g(true);
        g.backward(loss(g));
    }
    GradCheckResult res;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        Var<double>& leaf = *leaves[li];
        const std::size_t n = leaf.value().size();
        const std::size_t stride = n > max_entries ? n / max_entries : 1;
        for (std::size_t i = 0; i < n; i += stride) {
            const double orig = leaf.value()[i];
            leaf.mutable_value()[i] = orig + h;
            Graph<double> gp(false);
            const double fp = loss(gp).value()[0];
            leaf.mutable_value()[i] = orig - h;
            Graph<double> gm(false);
            const double fm = loss(gm).value()[0];
            leaf.mutable_value()[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double analytic = leaf.grad()[i];
            const double rel =
                std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), floor});
            if (rel > res.max_rel) {
                res.max_rel = rel;
                res.worst = "leaf " + std::to_string(li) + " entry " + std::to_string(i) + ": analytic " +
                            std::to_string(analytic) + " numeric " + std::to_string(numeric);
            }
        }
    }
    return res;
}

/// Contracts `y` with fixed random weights into a scalar so every output
/// entry carries a distinct gradient.
inline Var<double> probe(Graph<double>& g, const Var<double>& y, std::uint64_t seed = 99) {
    const Var<double> w = Var<double>::leaf(random_tensor(y.shape(), seed));
    return sum(g, mul(g, y, w));
}

inline std::vector<Var<double>*> param_vars(ParameterStore<double>& store) {
    std::vector<Var<double>*> out;
    for (std::size_t i = 0; i < store.size(); ++i) out.push_back(&store[i].var);
    return out;
}

}  // namespace sf2f::testing
