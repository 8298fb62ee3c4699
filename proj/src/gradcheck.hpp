#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "graph.hpp"

namespace sas {

// Central-difference gradient verification. Runs in double; callers build the
// model they want checked in double precision.
//
// build_loss must construct the loss from the *current* values of the
// parameters on the graph it is handed: it is invoked once with recording for
// the analytic gradient and then repeatedly (backward never called) for the
// perturbed evaluations.
//
// Returns max over coordinates of |a - n| / max(1e-8, |a| + |n|).
inline double finite_diff_check(
    const std::function<Tensor<double>(Graph<double>&)>& build_loss, Tensor<double> x,
    double h = 1e-5) {
    x.zero_grad();
    {
        Graph<double> g;
        Tensor<double> loss = build_loss(g);
        g.backward(loss);
    }
    std::vector<double> analytic(x.numel(), 0.0);
    if (x.has_grad())
        for (std::size_t i = 0; i < analytic.size(); ++i) analytic[i] = x.grad_at(i);

    auto eval = [&]() {
        Graph<double> g;
        return static_cast<double>(build_loss(g).at(0));
    };

    double worst = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        double orig = x.at(i);
        x.at(i) = orig + h;
        double up = eval();
        x.at(i) = orig - h;
        double down = eval();
        x.at(i) = orig;
        double numeric = (up - down) / (2.0 * h);
        double denom = std::abs(analytic[i]) + std::abs(numeric);
        double err = std::abs(analytic[i] - numeric) / std::max(1e-8, denom);
        worst = std::max(worst, err);
    }
    x.zero_grad();
    return worst;
}

// Same check across a whole parameter list; the analytic gradients are
// computed with a single backward pass.
inline double finite_diff_check_params(
    const std::function<Tensor<double>(Graph<double>&)>& build_loss,
    std::span<Tensor<double>> params, double h = 1e-5) {
    for (auto& p : params) p.zero_grad();
    {
        Graph<double> g;
        Tensor<double> loss = build_loss(g);
        g.backward(loss);
    }
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) {
        std::vector<double> a(p.numel(), 0.0);
        if (p.has_grad())
            for (std::size_t i = 0; i < a.size(); ++i) a[i] = p.grad_at(i);
        analytic.push_back(std::move(a));
    }

    auto eval = [&]() {
        Graph<double> g;
        return static_cast<double>(build_loss(g).at(0));
    };

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        for (std::size_t i = 0; i < p.numel(); ++i) {
            double orig = p.at(i);
            p.at(i) = orig + h;
            double up = eval();
            p.at(i) = orig - h;
            double down = eval();
            p.at(i) = orig;
            double numeric = (up - down) / (2.0 * h);
            double denom = std::abs(analytic[pi][i]) + std::abs(numeric);
            double err = std::abs(analytic[pi][i] - numeric) / std::max(1e-8, denom);
            worst = std::max(worst, err);
        }
        p.zero_grad();
    }
    return worst;
}

}  // namespace sas
