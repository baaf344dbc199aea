#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "spinsum/autodiff.hpp"
#include "spinsum/error.hpp"

using namespace spinsum;

namespace {

Tensor random_tensor(std::mt19937& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    Tensor t(rows, cols);
    for (double& x : t.data) x = dist(rng);
    return t;
}

// Builds a graph over copies of `inputs`, returns the loss. Used for both
// the analytic pass and finite-difference probes.
using Builder = std::function<Var(Graph&, const std::vector<Var>&)>;

double max_fd_error(std::vector<Tensor> inputs, const Builder& build, double eps = 1e-6) {
    Graph graph;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(graph.leaf(t));
    Var loss = build(graph, vars);
    REQUIRE(graph.value(loss).size() == 1);
    graph.backward(loss);

    double worst = 0.0;
    for (std::size_t v = 0; v < inputs.size(); ++v) {
        for (std::size_t c = 0; c < inputs[v].size(); ++c) {
            auto eval = [&](double delta) {
                std::vector<Tensor> probe = inputs;
                probe[v].data[c] += delta;
                Graph g2;
                std::vector<Var> vars2;
                for (const Tensor& t : probe) vars2.push_back(g2.leaf(t));
                return g2.value(build(g2, vars2)).data[0];
            };
            double fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
            double an = graph.grad(vars[v]).data[c];
            worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1.0}));
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("matmul forward value") {
    Graph g;
    Tensor a(2, 3), b(3, 2);
    a.data = {1, 2, 3, 4, 5, 6};
    b.data = {7, 8, 9, 10, 11, 12};
    Var c = g.matmul(g.leaf(a), g.leaf(b));
    CHECK(g.value(c)(0, 0) == doctest::Approx(58));
    CHECK(g.value(c)(0, 1) == doctest::Approx(64));
    CHECK(g.value(c)(1, 0) == doctest::Approx(139));
    CHECK(g.value(c)(1, 1) == doctest::Approx(154));
}

TEST_CASE("gradients of linear-algebra ops match finite differences") {
    std::mt19937 rng(1);
    std::vector<Tensor> inputs = {random_tensor(rng, 2, 3), random_tensor(rng, 3, 4),
                                  random_tensor(rng, 2, 4), random_tensor(rng, 1, 4)};
    double err = max_fd_error(inputs, [](Graph& g, const std::vector<Var>& v) {
        Var prod = g.matmul(v[0], v[1]);         // 2x4
        Var mixed = g.mul(g.add(prod, v[2]), g.sub(prod, v[2]));
        Var biased = g.add_rowwise(mixed, v[3]);
        Var again = g.matmul_nt(biased, v[2]);   // 2x2
        return g.mean_all(g.scale(again, 1.7));
    });
    CHECK(err < 1e-7);
}

TEST_CASE("gradients of activations match finite differences") {
    std::mt19937 rng(2);
    std::vector<Tensor> inputs = {random_tensor(rng, 3, 3)};
    double err = max_fd_error(inputs, [](Graph& g, const std::vector<Var>& v) {
        Var s = g.sigmoid(v[0]);
        Var t = g.tanh_op(v[0]);
        Var u = g.gelu(v[0]);
        return g.mean_all(g.mul(g.add(s, t), u));
    });
    CHECK(err < 1e-7);
}

TEST_CASE("masked softmax rows: values and gradients") {
    Graph g;
    Tensor x(2, 3);
    x.data = {1.0, 2.0, 3.0, 0.5, 0.5, 0.5};
    Tensor mask(2, 3);
    mask.data = {1, 1, 0, 1, 1, 1};
    Var probs = g.masked_softmax_rows(g.leaf(x), mask);
    CHECK(g.value(probs)(0, 2) == 0.0);
    CHECK(g.value(probs)(0, 0) + g.value(probs)(0, 1) == doctest::Approx(1.0));
    CHECK(g.value(probs)(1, 0) == doctest::Approx(1.0 / 3.0));

    std::mt19937 rng(3);
    std::vector<Tensor> inputs = {random_tensor(rng, 3, 4), random_tensor(rng, 3, 4)};
    Tensor m(3, 4);
    for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = (i % 3 == 0) ? 0.0 : 1.0;
    double err = max_fd_error(inputs, [m](Graph& g2, const std::vector<Var>& v) {
        Var p = g2.masked_softmax_rows(v[0], m);
        return g2.mean_all(g2.mul(p, v[1]));
    });
    CHECK(err < 1e-7);
}

TEST_CASE("fully masked softmax row is an internal error") {
    Graph g;
    Tensor x(1, 2);
    Tensor mask(1, 2);  // all zero
    CHECK_THROWS_AS(g.masked_softmax_rows(g.leaf(x), mask), InternalError);
}

TEST_CASE("layer norm: normalized rows and gradients") {
    Graph g;
    Tensor x(1, 4);
    x.data = {1.0, 2.0, 3.0, 4.0};
    Tensor gamma(1, 4), beta(1, 4);
    std::fill(gamma.data.begin(), gamma.data.end(), 1.0);
    Var y = g.layer_norm_rows(g.leaf(x), g.leaf(gamma), g.leaf(beta));
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 4; ++c) mean += g.value(y)(0, c);
    mean /= 4.0;
    for (std::size_t c = 0; c < 4; ++c) {
        double d = g.value(y)(0, c) - mean;
        var += d * d;
    }
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(var / 4.0 == doctest::Approx(1.0).epsilon(1e-4));

    std::mt19937 rng(4);
    std::vector<Tensor> inputs = {random_tensor(rng, 3, 5), random_tensor(rng, 1, 5),
                                  random_tensor(rng, 1, 5), random_tensor(rng, 3, 5)};
    double err = max_fd_error(inputs, [](Graph& g2, const std::vector<Var>& v) {
        Var y2 = g2.layer_norm_rows(v[0], v[1], v[2]);
        return g2.mean_all(g2.mul(y2, v[3]));
    });
    CHECK(err < 1e-6);
}

TEST_CASE("concat, slice and gather gradients") {
    std::mt19937 rng(5);
    std::vector<Tensor> inputs = {random_tensor(rng, 3, 2), random_tensor(rng, 3, 3),
                                  random_tensor(rng, 4, 5)};
    // Gather repeats row 1: its gradients must accumulate.
    std::vector<std::size_t> idx = {1, 1, 3, 0};
    double err = max_fd_error(inputs, [idx](Graph& g, const std::vector<Var>& v) {
        Var cat = g.concat_cols({v[0], v[1]});  // 3x5
        Var sliced = g.slice_cols(cat, 1, 4);   // 3x3
        Var gathered = g.gather_rows(v[2], idx);  // 4x5
        Var reduced = g.matmul_nt(sliced, g.slice_cols(gathered, 0, 3));  // 3x4... (3x3)*(4x3)^T
        return g.mean_all(reduced);
    });
    CHECK(err < 1e-7);
}

TEST_CASE("lerp_rows holds masked rows and routes gradients") {
    Graph g;
    Tensor a(2, 2), b(2, 2);
    a.data = {1, 1, 1, 1};
    b.data = {5, 5, 5, 5};
    Tensor mask(2, 1);
    mask.data = {1.0, 0.0};
    Var y = g.lerp_rows(g.leaf(a), g.leaf(b), mask);
    CHECK(g.value(y)(0, 0) == 1.0);
    CHECK(g.value(y)(1, 0) == 5.0);

    std::mt19937 rng(6);
    std::vector<Tensor> inputs = {random_tensor(rng, 3, 2), random_tensor(rng, 3, 2)};
    Tensor m(3, 1);
    m.data = {1.0, 0.0, 1.0};
    double err = max_fd_error(inputs, [m](Graph& g2, const std::vector<Var>& v) {
        return g2.mean_all(g2.mul(g2.lerp_rows(v[0], v[1], m), v[0]));
    });
    CHECK(err < 1e-7);
}

TEST_CASE("bce node: value and gradient") {
    Graph g;
    Tensor s(2, 1);
    s.data = {0.5, 0.5};
    std::size_t clamped = 0;
    Var loss = g.bce(g.leaf(s), {1.0, 0.0}, 1e-12, &clamped);
    CHECK(g.value(loss).data[0] == doctest::Approx(std::log(2.0)));
    CHECK(clamped == 0);

    std::mt19937 rng(7);
    Tensor raw = random_tensor(rng, 4, 1);
    std::vector<Tensor> inputs = {raw};
    std::vector<double> labels = {1.0, 0.0, 1.0, 0.0};
    double err = max_fd_error(inputs, [labels](Graph& g2, const std::vector<Var>& v) {
        return g2.bce(g2.sigmoid(v[0]), labels);
    });
    CHECK(err < 1e-7);

    // Boundary probabilities are clamped and flagged.
    Graph g3;
    Tensor extreme(2, 1);
    extreme.data = {0.0, 1.0};
    std::size_t clamp_count = 0;
    g3.bce(g3.leaf(extreme), {0.0, 1.0}, 1e-12, &clamp_count);
    CHECK(clamp_count == 2);
}

TEST_CASE("hinge_pairs: value and gradient away from the hinge point") {
    Graph g;
    Tensor x(3, 1);
    x.data = {0.9, 0.2, 0.4};
    Var loss = g.hinge_pairs(g.leaf(x), {{0, 1}}, 0.3);
    CHECK(g.value(loss).data[0] == doctest::Approx(0.0));
    Var loss2 = g.hinge_pairs(g.leaf(x), {{2, 1}}, 0.3);
    CHECK(g.value(loss2).data[0] == doctest::Approx(0.1));

    std::mt19937 rng(8);
    std::vector<Tensor> inputs = {random_tensor(rng, 5, 1)};
    std::vector<std::pair<std::size_t, std::size_t>> pairs = {{0, 1}, {2, 3}, {0, 4}, {2, 1}};
    double err = max_fd_error(inputs, [pairs](Graph& g2, const std::vector<Var>& v) {
        return g2.hinge_pairs(v[0], pairs, 1.0);
    });
    CHECK(err < 1e-7);
}

TEST_CASE("backward rejects non-scalar losses") {
    Graph g;
    Var v = g.leaf(Tensor(2, 2));
    CHECK_THROWS_AS(g.backward(v), InternalError);
}

TEST_CASE("shape mismatches are internal errors that name shapes") {
    Graph g;
    Var a = g.leaf(Tensor(2, 3));
    Var b = g.leaf(Tensor(2, 3));
    try {
        g.matmul(a, b);
        FAIL("expected InternalError");
    } catch (const InternalError& e) {
        CHECK(std::string(e.what()).find("2x3") != std::string::npos);
    }
}
