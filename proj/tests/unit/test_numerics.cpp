#include "oracles.hpp"
#include "polynet/rng.hpp"
#include "polynet/tape.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <numeric>

using namespace polynet;

namespace {

Tensor<double> random_tensor(Shape s, std::uint64_t seed, double lo = -1, double hi = 1)
{
    Rng rng(seed);
    Tensor<double> t(s);
    for (double& v : t.values) v = lo + (hi - lo) * uniform01(rng);
    return t;
}

using Build = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

// Contracts the op output with fixed random weights so every output entry
// contributes, then compares the tape gradient with central differences.
double max_gradient_error(std::vector<Tensor<double>> inputs, const Build& build)
{
    std::vector<std::vector<double>> grads(inputs.size());
    Tensor<double> weights;
    auto run = [&](bool with_backward) {
        Tape<double> tape;
        std::vector<Var> vars;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            grads[i].assign(inputs[i].values.size(), 0.0);
            vars.push_back(tape.parameter(inputs[i], grads[i].data()));
        }
        Var out = build(tape, vars);
        if (weights.values.empty()) weights = random_tensor(tape.shape(out), 99);
        Var loss = tape.sum(tape.mul(out, tape.constant(weights)));
        if (with_backward) tape.backward(loss);
        return tape.item(loss);
    };
    run(true);
    const auto analytic = grads;
    double worst = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto numeric = oracle::numeric_gradient([&] { return run(false); }, inputs[i].values);
        worst = std::max(worst, oracle::relative_error(analytic[i], numeric));
    }
    return worst;
}

}  // namespace

TEST_SUITE("numerics")
{
    TEST_CASE("finite-difference agreement for every op")
    {
        const Shape s34{3, 4};
        SUBCASE("matmul")
        {
            CHECK(max_gradient_error({random_tensor(s34, 1), random_tensor({4, 2}, 2)},
                                     [](auto& t, auto& v) { return t.matmul(v[0], v[1]); }) < 1e-6);
        }
        SUBCASE("matmul_nt")
        {
            CHECK(max_gradient_error({random_tensor(s34, 1), random_tensor({5, 4}, 2)},
                                     [](auto& t, auto& v) { return t.matmul_nt(v[0], v[1]); }) < 1e-6);
        }
        SUBCASE("affine")
        {
            CHECK(max_gradient_error({random_tensor(s34, 1), random_tensor({4, 2}, 2), random_tensor({1, 2}, 3)},
                                     [](auto& t, auto& v) { return t.affine(v[0], v[1], v[2]); }) < 1e-6);
        }
        SUBCASE("add / sub / mul, same shape and row broadcast")
        {
            for (Shape sb : {s34, Shape{1, 4}}) {
                CHECK(max_gradient_error({random_tensor(s34, 1), random_tensor(sb, 2)},
                                         [](auto& t, auto& v) { return t.add(v[0], v[1]); }) < 1e-6);
                CHECK(max_gradient_error({random_tensor(s34, 1), random_tensor(sb, 2)},
                                         [](auto& t, auto& v) { return t.sub(v[0], v[1]); }) < 1e-6);
                CHECK(max_gradient_error({random_tensor(s34, 1), random_tensor(sb, 2)},
                                         [](auto& t, auto& v) { return t.mul(v[0], v[1]); }) < 1e-6);
            }
        }
        SUBCASE("scale")
        {
            CHECK(max_gradient_error({random_tensor(s34, 1)},
                                     [](auto& t, auto& v) { return t.scale(v[0], -2.5); }) < 1e-6);
        }
        SUBCASE("concat")
        {
            CHECK(max_gradient_error({random_tensor(s34, 1), random_tensor({3, 2}, 2)}, [](auto& t, auto& v) {
                      const Var parts[] = {v[0], v[1], v[0]};
                      return t.concat(parts);
                  }) < 1e-6);
        }
        SUBCASE("relu away from the kink")
        {
            Tensor<double> x = random_tensor(s34, 1);
            for (double& z : x.values)
                if (std::abs(z) < 0.05) z = 0.3;
            CHECK(max_gradient_error({x}, [](auto& t, auto& v) { return t.relu(v[0]); }) < 1e-6);
        }
        SUBCASE("tanh / exp / log")
        {
            CHECK(max_gradient_error({random_tensor(s34, 1)}, [](auto& t, auto& v) { return t.tanh(v[0]); }) < 1e-6);
            CHECK(max_gradient_error({random_tensor(s34, 1)}, [](auto& t, auto& v) { return t.exp(v[0]); }) < 1e-6);
            CHECK(max_gradient_error({random_tensor(s34, 1, 0.5, 2.0)},
                                     [](auto& t, auto& v) { return t.log(v[0]); }) < 1e-6);
        }
        SUBCASE("masked softmax")
        {
            const std::vector<std::uint8_t> mask{1, 0, 1, 1, 1, 1, 1, 1, 0, 0, 1, 0};
            CHECK(max_gradient_error({random_tensor(s34, 1, -3, 3)},
                                     [&](auto& t, auto& v) { return t.masked_softmax(v[0], mask); }) < 1e-6);
        }
        SUBCASE("sum / mean_rows")
        {
            CHECK(max_gradient_error({random_tensor(s34, 1)}, [](auto& t, auto& v) { return t.sum(v[0]); }) < 1e-6);
            CHECK(max_gradient_error({random_tensor(s34, 1)},
                                     [](auto& t, auto& v) { return t.mean_rows(v[0]); }) < 1e-6);
        }
        SUBCASE("gather_rows with repeats, gather_cols, pick")
        {
            const std::vector<int> rows{2, 0, 2, 1, 2};
            const std::vector<int> cols{3, 0, 3};
            CHECK(max_gradient_error({random_tensor(s34, 1)},
                                     [&](auto& t, auto& v) { return t.gather_rows(v[0], rows); }) < 1e-6);
            CHECK(max_gradient_error({random_tensor(s34, 1)},
                                     [](auto& t, auto& v) { return t.gather_cols(v[0], 1, 2); }) < 1e-6);
            CHECK(max_gradient_error({random_tensor(s34, 1)},
                                     [&](auto& t, auto& v) { return t.pick(v[0], cols); }) < 1e-6);
        }
        SUBCASE("instance norm")
        {
            CHECK(max_gradient_error({random_tensor({5, 4}, 1), random_tensor({1, 4}, 2), random_tensor({1, 4}, 3)},
                                     [](auto& t, auto& v) { return t.instance_norm(v[0], v[1], v[2]); }) < 1e-6);
        }
    }

    TEST_CASE("softmax of [0, ln 3] with nothing masked")
    {
        Tape<double> tape;
        Var p = tape.masked_softmax(tape.constant({1, 2}, std::vector<double>{0.0, std::log(3.0)}),
                                    std::vector<std::uint8_t>{1, 1});
        CHECK(tape.value(p)[0] == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(tape.value(p)[1] == doctest::Approx(0.75).epsilon(1e-12));
    }

    TEST_CASE("masked entries get exactly zero probability")
    {
        Tape<double> tape;
        Var p = tape.masked_softmax(tape.constant({1, 3}, std::vector<double>{5.0, 1.0, 2.0}),
                                    std::vector<std::uint8_t>{0, 1, 1});
        CHECK(tape.value(p)[0] == 0.0);
        CHECK(tape.value(p)[1] + tape.value(p)[2] == doctest::Approx(1.0).epsilon(1e-12));
    }

    TEST_CASE("softmax rows sum to one on random logits")
    {
        Tape<double> tape;
        Tensor<double> x = random_tensor({6, 9}, 5, -20, 20);
        std::vector<std::uint8_t> mask(54, 1);
        Rng rng(3);
        for (auto& m : mask) m = uniform01(rng) < 0.6;
        for (int r = 0; r < 6; ++r) mask[static_cast<std::size_t>(r * 9)] = 1;
        Var p = tape.masked_softmax(tape.constant(x), mask);
        auto v = tape.value(p);
        for (int r = 0; r < 6; ++r) {
            const double total = std::accumulate(v.begin() + r * 9, v.begin() + r * 9 + 9, 0.0);
            CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        }
    }

    TEST_CASE("fully masked row raises")
    {
        Tape<double> tape;
        CHECK_THROWS_AS(tape.masked_softmax(tape.constant({1, 2}, std::vector<double>{1.0, 2.0}),
                                            std::vector<std::uint8_t>{0, 0}),
                        NumericError);
    }

    TEST_CASE("relu of [-1, 0, 2]")
    {
        Tape<double> tape;
        Var r = tape.relu(tape.constant({1, 3}, std::vector<double>{-1.0, 0.0, 2.0}));
        CHECK(std::vector<double>(tape.value(r).begin(), tape.value(r).end()) == std::vector<double>{0, 0, 2});
    }

    TEST_CASE("gradient of sum(x*x) at [1, 2]")
    {
        Tensor<double> x({1, 2}, {1.0, 2.0});
        std::vector<double> g(2, 0.0);
        Tape<double> tape;
        Var v = tape.parameter(x, g.data());
        tape.backward(tape.sum(tape.mul(v, v)));
        CHECK(g == std::vector<double>{2.0, 4.0});
    }

    TEST_CASE("a parameter the loss ignores keeps a zero gradient")
    {
        Tensor<double> x({1, 2}, {1.0, 2.0}), unused({2, 2}, {1, 2, 3, 4});
        std::vector<double> gx(2, 0.0), gu(4, 0.0);
        Tape<double> tape;
        Var v = tape.parameter(x, gx.data());
        tape.parameter(unused, gu.data());
        tape.backward(tape.sum(tape.exp(v)));
        CHECK(gu == std::vector<double>(4, 0.0));
    }

    TEST_CASE("log softmax(Wx)[k] gradient against finite differences")
    {
        const std::vector<std::uint8_t> mask(5, 1);
        const std::vector<int> pick{3};
        const double err = max_gradient_error({random_tensor({1, 4}, 7), random_tensor({4, 5}, 8)},
                                              [&](auto& t, auto& v) {
                                                  return t.log(t.pick(t.masked_softmax(t.matmul(v[0], v[1]), mask), pick));
                                              });
        CHECK(err < 1e-6);
    }

    TEST_CASE("backward is linear in the loss")
    {
        Tensor<double> x = random_tensor({2, 3}, 11);
        auto grad_of = [&](int which) {
            std::vector<double> g(6, 0.0);
            Tape<double> tape;
            Var v = tape.parameter(x, g.data());
            Var l1 = tape.sum(tape.tanh(v));
            Var l2 = tape.sum(tape.mul(v, v));
            tape.backward(which == 0 ? l1 : which == 1 ? l2 : tape.add(l1, l2));
            return g;
        };
        auto g1 = grad_of(0), g2 = grad_of(1), g12 = grad_of(2);
        for (std::size_t i = 0; i < 6; ++i) CHECK(g12[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-12));
    }

    TEST_CASE("gradients accumulate across backward passes")
    {
        Tensor<double> x({1, 2}, {0.5, -1.0});
        std::vector<double> g(2, 0.0);
        for (int pass = 0; pass < 2; ++pass) {
            Tape<double> tape;
            tape.backward(tape.sum(tape.scale(tape.parameter(x, g.data()), 3.0)));
        }
        CHECK(g == std::vector<double>{6.0, 6.0});
    }

    TEST_CASE("shape mismatches are reported")
    {
        Tape<double> tape;
        Var a = tape.constant(random_tensor({2, 3}, 1));
        Var b = tape.constant(random_tensor({2, 2}, 2));
        CHECK_THROWS_AS(tape.matmul(a, b), ShapeError);
        CHECK_THROWS_AS(tape.add(a, b), ShapeError);
        CHECK_THROWS_AS(tape.instance_norm(a, b, b), ShapeError);
        CHECK_THROWS_AS(Tensor<double>({2, 2}, {1.0, 2.0}), ShapeError);
    }

    TEST_CASE("backward needs a scalar loss with a differentiable input")
    {
        Tape<double> tape;
        Var c = tape.constant(random_tensor({2, 2}, 1));
        CHECK_THROWS(tape.backward(c));
        CHECK_THROWS(tape.backward(tape.sum(c)));
    }

    TEST_CASE("log of zero is a numeric error")
    {
        Tape<double> tape;
        CHECK_THROWS_AS(tape.log(tape.constant({1, 2}, std::vector<double>{1.0, 0.0})), NumericError);
    }

    TEST_CASE("recording off leaves parameter buffers untouched")
    {
        Tensor<double> x({1, 2}, {1.0, 2.0});
        std::vector<double> g(2, 0.0);
        Tape<double> tape;
        tape.set_recording(false);
        Var loss = tape.sum(tape.mul(tape.parameter(x, g.data()), tape.constant(x)));
        CHECK_FALSE(tape.requires_grad(loss));
        CHECK(tape.item(loss) == 5.0);
    }

    TEST_CASE("rewind drops nodes and reuses storage")
    {
        Tape<double> tape;
        Var a = tape.constant(random_tensor({2, 2}, 1));
        const auto m = tape.mark();
        for (int i = 0; i < 10; ++i) tape.exp(a);
        tape.rewind(m);
        CHECK(tape.size() == m);
        Var b = tape.scale(a, 2.0);
        CHECK(tape.value(b)[0] == doctest::Approx(2 * tape.value(a)[0]));
    }

    TEST_CASE("float tape agrees with double tape")
    {
        Tensor<double> xd = random_tensor({3, 5}, 4);
        Tensor<float> xf(xd.shape);
        for (std::size_t i = 0; i < xd.values.size(); ++i) xf.values[i] = static_cast<float>(xd.values[i]);
        const std::vector<std::uint8_t> mask(15, 1);
        Tape<double> td;
        Tape<float> tf;
        auto vd = td.value(td.masked_softmax(td.tanh(td.constant(xd)), mask));
        auto vf = tf.value(tf.masked_softmax(tf.tanh(tf.constant(xf)), mask));
        for (std::size_t i = 0; i < 15; ++i) CHECK(vf[i] == doctest::Approx(vd[i]).epsilon(1e-5));
    }
}
