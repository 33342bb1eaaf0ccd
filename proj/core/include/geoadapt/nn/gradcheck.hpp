#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "geoadapt/nn/params.hpp"
#include "geoadapt/nn/tape.hpp"

namespace geoadapt::nn {

struct GradCheckOptions {
    double eps = 1e-5;
    size_t max_coords_per_param = 32;  // random subsample above this
    uint64_t seed = 7;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    size_t worst_coord = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Compares tape gradients with central finite differences. build_loss must
/// construct the loss from scratch on the given tape using the store's
/// current values (typically through Bound). Error per coordinate is
/// |a - n| / max(1, |a| + |n|): relative above unit scale, absolute below
/// it. Central differences carry rounding noise of order
/// machine_eps * |loss| / eps, so coordinates whose true gradient sits at
/// or below that floor (identically-zero gradients included) must not be
/// judged on relative error alone.
inline GradCheckResult finite_diff_check(
    ParameterStore<double>& store,
    const std::function<Var(Tape<double>&, ParameterStore<double>&)>& build_loss,
    const GradCheckOptions& opts = {}) {
    // Analytic pass.
    std::vector<Tensor<double>> analytic;
    {
        Tape<double> tape;
        Var loss = build_loss(tape, store);
        tape.backward(loss);
        std::vector<const Tensor<double>*> by_index(store.size(), nullptr);
        for (const auto& [name, idx] : tape.named_params()) {
            for (size_t k = 0; k < store.size(); ++k)
                if (store.entries()[k].first == name) {
                    by_index[k] = &tape.grad(Var{idx});
                    break;
                }
        }
        for (size_t k = 0; k < store.size(); ++k) {
            if (by_index[k])
                analytic.push_back(*by_index[k]);
            else
                analytic.push_back(Tensor<double>::zeros(store.entries()[k].second.value.shape));
        }
    }

    auto forward_value = [&]() {
        Tape<double> tape;
        Var loss = build_loss(tape, store);
        return tape.val(loss).data[0];
    };

    GradCheckResult result;
    Rng rng(opts.seed);
    for (size_t k = 0; k < store.size(); ++k) {
        auto& [name, p] = store.entries()[k];
        std::vector<size_t> coords(p.value.size());
        for (size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        if (coords.size() > opts.max_coords_per_param) {
            rng.shuffle(coords);
            coords.resize(opts.max_coords_per_param);
            std::sort(coords.begin(), coords.end());
        }
        for (size_t c : coords) {
            double orig = p.value.data[c];
            p.value.data[c] = orig + opts.eps;
            double fp = forward_value();
            p.value.data[c] = orig - opts.eps;
            double fm = forward_value();
            p.value.data[c] = orig;
            double numeric = (fp - fm) / (2.0 * opts.eps);
            double a = analytic[k].data[c];
            double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a) + std::abs(numeric));
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_param = name;
                result.worst_coord = c;
                result.analytic = a;
                result.numeric = numeric;
            }
        }
    }
    return result;
}

}  // namespace geoadapt::nn
