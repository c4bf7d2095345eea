#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "vip/adam.hpp"
#include "vip/gradcheck.hpp"
#include "vip/nn.hpp"
#include "vip/rng.hpp"

using namespace vip;

namespace {

// Naive per-cell convolution oracle, independent of the library kernels.
Tensor naive_conv(const Tensor& in, const Tensor& ker, const Tensor& bias, bool relu) {
    const std::size_t ci = in.dim(0), h = in.dim(1), w = in.dim(2);
    const std::size_t co = ker.dim(0), r = ker.dim(2);
    Tensor out({co, h, w});
    for (std::size_t ko = 0; ko < co; ++ko)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                double acc = bias[ko];
                for (std::size_t k = 0; k < ci; ++k)
                    for (std::size_t s = 0; s < r; ++s)
                        for (std::size_t t = 0; t < r; ++t) {
                            if (i + s >= h || j + t >= w) continue;  // zero padding
                            acc += ker.data[((ko * ci + k) * r + s) * r + t] *
                                   in.at(k, i + s, j + t);
                        }
                out.at(ko, i, j) = relu && acc < 0 ? 0.0 : acc;
            }
    return out;
}

Tensor rand_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("conv2d zero input stays zero") {
    Tensor in({1, 3, 3});
    Tensor ker({2, 1, 2, 2});
    ker.fill(0.7);
    Tensor bias({2});
    const Tensor out = conv2d_forward(in, ker, bias, Activation::relu);
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("conv2d hand case 2x2 ones kernel") {
    Tensor in({1, 2, 2}, {1, 2, 3, 4});
    Tensor ker({1, 1, 2, 2});
    ker.fill(1.0);
    Tensor bias({1});
    const Tensor out = conv2d_forward(in, ker, bias, Activation::identity);
    CHECK(out.at(0, 0, 0) == doctest::Approx(10.0));
    CHECK(out.at(0, 0, 1) == doctest::Approx(6.0));
    CHECK(out.at(0, 1, 0) == doctest::Approx(7.0));
    CHECK(out.at(0, 1, 1) == doctest::Approx(4.0));
}

TEST_CASE("conv2d delta kernel reproduces the input") {
    Rng rng(5);
    const Tensor in = rand_tensor(rng, {3, 4, 5});
    Tensor ker({3, 3, 2, 2});
    for (std::size_t ko = 0; ko < 3; ++ko) ker.data[((ko * 3 + ko) * 2) * 2] = 1.0;
    Tensor bias({3});
    const Tensor out = conv2d_forward(in, ker, bias, Activation::identity);
    for (std::size_t i = 0; i < in.size(); ++i) CHECK(out[i] == doctest::Approx(in[i]));
}

TEST_CASE("conv2d matches the naive oracle on random instances") {
    Rng rng(42);
    for (int iter = 0; iter < 20; ++iter) {
        const std::size_t ci = 1 + rng.bounded(3), co = 1 + rng.bounded(4);
        const std::size_t h = 1 + rng.bounded(6), w = 1 + rng.bounded(8);
        const std::size_t r = 1 + rng.bounded(3);
        const Tensor in = rand_tensor(rng, {ci, h, w});
        const Tensor ker = rand_tensor(rng, {co, ci, r, r});
        const Tensor bias = rand_tensor(rng, {co});
        const bool relu = rng.bounded(2) == 0;
        const Tensor got =
            conv2d_forward(in, ker, bias, relu ? Activation::relu : Activation::identity);
        const Tensor want = naive_conv(in, ker, bias, relu);
        REQUIRE(got.shape == want.shape);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d channel mismatch raises a shape error") {
    Tensor in({2, 3, 3});
    Tensor ker({4, 3, 2, 2});
    Tensor bias({4});
    CHECK_THROWS_AS(conv2d_forward(in, ker, bias, Activation::relu), ShapeError);
}

TEST_CASE("conv2d with identity activation is linear") {
    Rng rng(9);
    const Tensor ker = rand_tensor(rng, {2, 2, 2, 2});
    const Tensor bias({2});  // zero bias so f(0) = 0
    for (int iter = 0; iter < 10; ++iter) {
        const Tensor x = rand_tensor(rng, {2, 3, 4});
        const Tensor y = rand_tensor(rng, {2, 3, 4});
        const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
        Tensor mix({2, 3, 4});
        for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
        const Tensor fm = conv2d_forward(mix, ker, bias, Activation::identity);
        const Tensor fx = conv2d_forward(x, ker, bias, Activation::identity);
        const Tensor fy = conv2d_forward(y, ker, bias, Activation::identity);
        for (std::size_t i = 0; i < fm.size(); ++i)
            CHECK(fm[i] == doctest::Approx(a * fx[i] + b * fy[i]).epsilon(1e-10));
    }
}

TEST_CASE("conv2d float instantiation matches double within tolerance") {
    Rng rng(3);
    const Tensor in = rand_tensor(rng, {2, 4, 4});
    const Tensor ker = rand_tensor(rng, {3, 2, 2, 2});
    const Tensor bias = rand_tensor(rng, {3});
    TensorF inf({2, 4, 4}), kerf({3, 2, 2, 2}), biasf({3});
    for (std::size_t i = 0; i < in.size(); ++i) inf[i] = static_cast<float>(in[i]);
    for (std::size_t i = 0; i < ker.size(); ++i) kerf[i] = static_cast<float>(ker[i]);
    for (std::size_t i = 0; i < bias.size(); ++i) biasf[i] = static_cast<float>(bias[i]);
    const Tensor out = conv2d_forward(in, ker, bias, Activation::relu);
    const TensorF outf = conv2d_forward(inf, kerf, biasf, Activation::relu);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(static_cast<double>(outf[i]) == doctest::Approx(out[i]).epsilon(1e-5));
}

TEST_CASE("maxpool shapes and paper defaults") {
    Tensor in({8, 4, 64});
    std::size_t idx = 0;
    for (auto& v : in.data) v = std::sin(static_cast<double>(idx++));
    const auto res = maxpool2d_forward(in, 2, 2);
    CHECK(res.out.shape == std::vector<std::size_t>{8, 2, 32});
}

TEST_CASE("maxpool constant input stays constant") {
    Tensor in({2, 4, 4});
    in.fill(3.25);
    const auto res = maxpool2d_forward(in, 2, 2);
    for (double v : res.out.data) CHECK(v == 3.25);
}

TEST_CASE("maxpool hand case [[1,2],[3,4]] -> [[4]]") {
    Tensor in({1, 2, 2}, {1, 2, 3, 4});
    const auto res = maxpool2d_forward(in, 2, 2);
    CHECK(res.out.size() == 1);
    CHECK(res.out[0] == 4.0);
    CHECK(res.argmax[0] == 3);
}

TEST_CASE("maxpool output values always come from the input") {
    Rng rng(17);
    for (int iter = 0; iter < 20; ++iter) {
        const std::size_t h = 2 + rng.bounded(7), w = 2 + rng.bounded(9);
        const Tensor in = rand_tensor(rng, {2, h, w});
        const std::size_t d = 2 + rng.bounded(2);
        if (h < d || w < d) continue;
        const auto res = maxpool2d_forward(in, d, d);
        const double in_max = *std::max_element(in.data.begin(), in.data.end());
        for (std::size_t cell = 0; cell < res.out.size(); ++cell) {
            CHECK(res.out[cell] <= in_max);
            CHECK(res.out[cell] == in.data[res.argmax[cell]]);
        }
        // Exhaustive window-max oracle.
        const std::size_t ho = h / d, wo = w / d;
        REQUIRE(res.out.shape == std::vector<std::size_t>{2, ho, wo});
        for (std::size_t k = 0; k < 2; ++k)
            for (std::size_t i = 0; i < ho; ++i)
                for (std::size_t j = 0; j < wo; ++j) {
                    double best = -1e300;
                    for (std::size_t s = 0; s < d; ++s)
                        for (std::size_t t = 0; t < d; ++t)
                            best = std::max(best, in.at(k, i * d + s, j * d + t));
                    CHECK(res.out.at(k, i, j) == best);
                }
    }
}

TEST_CASE("maxpool rejects bad window configs") {
    Tensor in({1, 4, 4});
    CHECK_THROWS_AS(maxpool2d_forward(in, 0, 1), ConfigError);
    CHECK_THROWS_AS(maxpool2d_forward(in, 5, 5), ShapeError);
}

TEST_CASE("dense layer hand cases") {
    Tensor w0({2, 2});
    Tensor b0({2});
    Tensor v({2}, {-1, 2});
    const Tensor zero = dense_forward(v, w0, b0, Activation::identity);
    CHECK(zero[0] == 0.0);
    CHECK(zero[1] == 0.0);

    Tensor eye({2, 2}, {1, 0, 0, 1});
    const Tensor clamped = dense_forward(v, eye, b0, Activation::relu);
    CHECK(clamped[0] == 0.0);
    CHECK(clamped[1] == 2.0);

    Tensor w1({2, 2}, {1, 1, 0, 3});
    Tensor b1({2}, {0.5, -7});
    Tensor v1({2}, {1, 2});
    const Tensor out = dense_forward(v1, w1, b1, Activation::identity);
    CHECK(out[0] == doctest::Approx(3.5));
    CHECK(out[1] == doctest::Approx(-1.0));
}

TEST_CASE("dense shape mismatch raises") {
    Tensor w({2, 3});
    Tensor b({2});
    Tensor v({2});
    CHECK_THROWS_AS(dense_forward(v, w, b, Activation::identity), ShapeError);
}

namespace {

struct LstmFixture {
    Tensor W_i, W_f, W_c, W_o, U_i, U_f, U_c, U_o, b_i, b_f, b_c, b_o;
    LstmFixture(std::size_t L, std::size_t D)
        : W_i({L, D}), W_f({L, D}), W_c({L, D}), W_o({L, D}), U_i({L, L}), U_f({L, L}),
          U_c({L, L}), U_o({L, L}), b_i({L}), b_f({L}), b_c({L}), b_o({L}) {}
    LstmWeights weights() const {
        return {&W_i, &W_f, &W_c, &W_o, &U_i, &U_f, &U_c, &U_o, &b_i, &b_f, &b_c, &b_o};
    }
};

}  // namespace

TEST_CASE("lstm all-zero params give zero state") {
    LstmFixture fx(3, 4);
    std::vector<double> q(4, 0.7), h(3, 0.0), c(3, 0.0);
    const auto step = lstm_cell_forward<double>(q, h, c, fx.weights());
    for (double v : step.h) CHECK(v == 0.0);  // o=0.5, tanh(c)=tanh(0)=0
    for (double v : step.c) CHECK(v == 0.0);
}

TEST_CASE("lstm scalar hand case") {
    LstmFixture fx(1, 1);
    fx.W_i[0] = fx.W_f[0] = fx.W_o[0] = fx.W_c[0] = 1.0;
    std::vector<double> q{0.0}, h{0.0}, c{1.0};
    const auto step = lstm_cell_forward<double>(q, h, c, fx.weights());
    // i=f=o=0.5, g=tanh(0)=0, c_t = 0.5*1 + 0.5*0 = 0.5, h = 0.5*tanh(0.5)
    CHECK(step.f[0] == doctest::Approx(0.5));
    CHECK(step.c[0] == doctest::Approx(0.5));
    CHECK(step.h[0] == doctest::Approx(0.5 * std::tanh(0.5)));
}

TEST_CASE("lstm saturated forget gate preserves the cell") {
    LstmFixture fx(2, 2);
    fx.b_f[0] = fx.b_f[1] = 20.0;
    std::vector<double> q(2, 0.0), h(2, 0.0), c{0.8, -0.3};
    const auto step = lstm_cell_forward<double>(q, h, c, fx.weights());
    for (std::size_t r = 0; r < 2; ++r) {
        CHECK(std::fabs(step.f[r] - 1.0) < 1e-8);
        // g = tanh(0) = 0, so c_t = f * c_prev
        CHECK(step.c[r] == doctest::Approx(step.f[r] * c[r]));
    }
}

TEST_CASE("lstm gates stay strictly inside (0,1) and |c| is bounded") {
    Rng rng(23);
    LstmFixture fx(4, 6);
    for (Tensor* t : {&fx.W_i, &fx.W_f, &fx.W_c, &fx.W_o, &fx.U_i, &fx.U_f, &fx.U_c, &fx.U_o,
                      &fx.b_i, &fx.b_f, &fx.b_c, &fx.b_o})
        for (auto& v : t->data) v = rng.uniform(-2, 2);
    for (int iter = 0; iter < 50; ++iter) {
        std::vector<double> q(6), h(4), c(4);
        for (auto& v : q) v = rng.uniform(-3, 3);
        for (auto& v : h) v = rng.uniform(-1, 1);
        for (auto& v : c) v = rng.uniform(-2, 2);
        const auto step = lstm_cell_forward<double>(q, h, c, fx.weights());
        for (std::size_t r = 0; r < 4; ++r) {
            for (double g : {step.i[r], step.f[r], step.o[r]}) {
                CHECK(g > 0.0);
                CHECK(g < 1.0);
            }
            CHECK(std::fabs(step.c[r]) <= std::fabs(step.f[r] * c[r]) + 1.0 + 1e-12);
        }
    }
}

TEST_CASE("lstm dimension mismatch raises") {
    LstmFixture fx(2, 3);
    std::vector<double> q(3), h(1), c(2);
    CHECK_THROWS_AS(lstm_cell_forward<double>(q, h, c, fx.weights()), ShapeError);
}

TEST_CASE("forward ops are deterministic") {
    Rng rng(31);
    const Tensor in = rand_tensor(rng, {3, 4, 8});
    const Tensor ker = rand_tensor(rng, {4, 3, 2, 2});
    const Tensor bias = rand_tensor(rng, {4});
    const Tensor a = conv2d_forward(in, ker, bias, Activation::relu);
    const Tensor b = conv2d_forward(in, ker, bias, Activation::relu);
    CHECK(a.data == b.data);  // bit identical
    const auto pa = maxpool2d_forward(a, 2, 2);
    const auto pb = maxpool2d_forward(b, 2, 2);
    CHECK(pa.out.data == pb.out.data);
    CHECK(pa.argmax == pb.argmax);
}

TEST_CASE("adam zero gradient leaves params and moments untouched") {
    ParamSet params;
    params.add("w", {3}, ParamGroup::phi1, false).tensor.fill(0.5);
    AdamState st = AdamState::init(params);
    const auto grads = params.zero_grads();
    adam_step(params, grads, st, {});
    CHECK(st.step == 1);
    for (double v : params.items[0].tensor.data) CHECK(v == 0.5);
    for (double v : st.first_moment[0].data) CHECK(v == 0.0);
    for (double v : st.second_moment[0].data) CHECK(v == 0.0);
}

TEST_CASE("adam single-step closed form") {
    ParamSet params;
    params.add("w", {1}, ParamGroup::phi1, false).tensor[0] = 1.0;
    AdamState st = AdamState::init(params);
    std::vector<Tensor> grads = params.zero_grads();
    grads[0][0] = 1.0;
    const AdamHyper hyper{};
    adam_step(params, grads, st, hyper);
    // m_hat = v_hat = 1 at t=1, so the step is lr / (1 + eps).
    const double expect = 1.0 - hyper.lr * 1.0 / (1.0 + hyper.eps);
    CHECK(params.items[0].tensor[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("adam update is odd in the gradient") {
    Rng rng(77);
    for (int iter = 0; iter < 5; ++iter) {
        ParamSet a, b;
        a.add("w", {4}, ParamGroup::phi2, false);
        b.add("w", {4}, ParamGroup::phi2, false);
        for (std::size_t i = 0; i < 4; ++i) a.items[0].tensor[i] = b.items[0].tensor[i] = 0.0;
        AdamState sta = AdamState::init(a), stb = AdamState::init(b);
        std::vector<Tensor> ga = a.zero_grads(), gb = b.zero_grads();
        for (std::size_t i = 0; i < 4; ++i) {
            ga[0][i] = rng.uniform(-2, 2);
            gb[0][i] = -ga[0][i];
        }
        adam_step(a, ga, sta, {});
        adam_step(b, gb, stb, {});
        for (std::size_t i = 0; i < 4; ++i)
            CHECK(a.items[0].tensor[i] == doctest::Approx(-b.items[0].tensor[i]).epsilon(1e-14));
    }
}

TEST_CASE("adam rejects non-finite gradients with the parameter name") {
    ParamSet params;
    params.add("conv.w", {2}, ParamGroup::phi1, false);
    AdamState st = AdamState::init(params);
    std::vector<Tensor> grads = params.zero_grads();
    grads[0][1] = std::numeric_limits<double>::quiet_NaN();
    try {
        adam_step(params, grads, st, {});
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(e.param_name == "conv.w");
    }
}

TEST_CASE("per-layer finite difference checks") {
    Rng rng(101);

    SUBCASE("conv2d parameter and input gradients") {
        const Tensor in = rand_tensor(rng, {2, 3, 5});
        ParamSet ps;
        auto& kernels = ps.add("k", {3, 2, 2, 2}, ParamGroup::phi1, false);
        auto& bias = ps.add("b", {3}, ParamGroup::phi1, true);
        for (auto& v : kernels.tensor.data) v = rng.uniform(-1, 1);
        for (auto& v : bias.tensor.data) v = rng.uniform(-1, 1);
        const Tensor coeff = rand_tensor(rng, {3, 3, 5});
        auto loss = [&]() {
            const Tensor out = conv2d_forward(in, ps.find("k").tensor, ps.find("b").tensor,
                                              Activation::relu);
            double acc = 0;
            for (std::size_t i = 0; i < out.size(); ++i) acc += coeff[i] * out[i];
            return acc;
        };
        const Tensor out =
            conv2d_forward(in, ps.find("k").tensor, ps.find("b").tensor, Activation::relu);
        std::vector<Tensor> analytic = ps.zero_grads();
        Tensor d_in({2, 3, 5});
        conv2d_backward(in, ps.find("k").tensor, Activation::relu, out, coeff, &d_in,
                        analytic[0], analytic[1]);
        const auto numeric = finite_diff_grads(ps, loss);
        const auto rep = compare_grads(ps, analytic, numeric);
        CHECK(rep.max_rel_err < 1e-6);
    }

    SUBCASE("dense parameter gradients") {
        const Tensor v = rand_tensor(rng, {4});
        ParamSet ps;
        for (auto& val : ps.add("w", {3, 4}, ParamGroup::phi2, false).tensor.data)
            val = rng.uniform(-1, 1);
        for (auto& val : ps.add("b", {3}, ParamGroup::phi2, true).tensor.data)
            val = rng.uniform(-1, 1);
        const Tensor coeff = rand_tensor(rng, {3});
        auto loss = [&]() {
            const Tensor out =
                dense_forward(v, ps.find("w").tensor, ps.find("b").tensor, Activation::relu);
            double acc = 0;
            for (std::size_t i = 0; i < 3; ++i) acc += coeff[i] * out[i];
            return acc;
        };
        const Tensor out =
            dense_forward(v, ps.find("w").tensor, ps.find("b").tensor, Activation::relu);
        std::vector<Tensor> analytic = ps.zero_grads();
        dense_backward(v, ps.find("w").tensor, Activation::relu, out, coeff,
                       static_cast<Tensor*>(nullptr), analytic[0], analytic[1]);
        const auto rep = compare_grads(ps, analytic, finite_diff_grads(ps, loss));
        CHECK(rep.max_rel_err < 1e-6);
    }

    SUBCASE("lstm cell parameter gradients") {
        const std::size_t L = 3, D = 4;
        ParamSet ps;
        const char* names[12] = {"W_i", "W_f", "W_c", "W_o", "U_i", "U_f",
                                 "U_c", "U_o", "b_i", "b_f", "b_c", "b_o"};
        for (int n = 0; n < 4; ++n) ps.add(names[n], {L, D}, ParamGroup::phi1, false);
        for (int n = 4; n < 8; ++n) ps.add(names[n], {L, L}, ParamGroup::phi1, false);
        for (int n = 8; n < 12; ++n) ps.add(names[n], {L}, ParamGroup::phi1, true);
        for (auto& p : ps.items)
            for (auto& v : p.tensor.data) v = rng.uniform(-1, 1);
        std::vector<double> q(D), h0(L), c0(L);
        for (auto& v : q) v = rng.uniform(-1, 1);
        for (auto& v : h0) v = rng.uniform(-1, 1);
        for (auto& v : c0) v = rng.uniform(-1, 1);
        const Tensor coeff_h = rand_tensor(rng, {L}), coeff_c = rand_tensor(rng, {L});
        auto make_weights = [&]() {
            return LstmWeights{&ps.find("W_i").tensor, &ps.find("W_f").tensor,
                               &ps.find("W_c").tensor, &ps.find("W_o").tensor,
                               &ps.find("U_i").tensor, &ps.find("U_f").tensor,
                               &ps.find("U_c").tensor, &ps.find("U_o").tensor,
                               &ps.find("b_i").tensor, &ps.find("b_f").tensor,
                               &ps.find("b_c").tensor, &ps.find("b_o").tensor};
        };
        auto loss = [&]() {
            const auto step = lstm_cell_forward<double>(q, h0, c0, make_weights());
            double acc = 0;
            for (std::size_t r = 0; r < L; ++r)
                acc += coeff_h[r] * step.h[r] + coeff_c[r] * step.c[r];
            return acc;
        };
        std::vector<Tensor> analytic = ps.zero_grads();
        const auto step = lstm_cell_forward<double>(q, h0, c0, make_weights());
        LstmGrads lg{&analytic[0], &analytic[1], &analytic[2],  &analytic[3],
                     &analytic[4], &analytic[5], &analytic[6],  &analytic[7],
                     &analytic[8], &analytic[9], &analytic[10], &analytic[11]};
        std::vector<double> d_q, d_h_prev, d_c_prev;
        lstm_cell_backward<double>(q, h0, c0, make_weights(), step, coeff_h.data, coeff_c.data,
                                   lg, d_q, d_h_prev, d_c_prev);
        const auto rep = compare_grads(ps, analytic, finite_diff_grads(ps, loss));
        CHECK(rep.max_rel_err < 1e-6);
    }
}
