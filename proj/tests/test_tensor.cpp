#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "kggen/errors.hpp"
#include "kggen/gradcheck.hpp"
#include "kggen/rng.hpp"
#include "kggen/serialize.hpp"
#include "kggen/tensor.hpp"

using namespace kggen;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, bool rg = true) {
    Tensor t = Tensor::zeros(std::move(shape), rg);
    for (double& v : t.values()) v = rng.uniform(-1.0, 1.0);
    return t;
}

// Materializes the conv operator matrix for kernel k acting on length-m
// sequences, built directly from the definition.
std::vector<std::vector<double>> conv_matrix(const std::vector<double>& k, std::size_t m) {
    const std::size_t l = k.size(), w = m - l + 1;
    std::vector<std::vector<double>> c(w, std::vector<double>(m, 0.0));
    for (std::size_t t = 0; t < w; ++t)
        for (std::size_t j = 0; j < l; ++j) c[t][t + j] = k[j];
    return c;
}

// Materializes the deconv operator column by column by applying it to basis
// vectors.
std::vector<std::vector<double>> deconv_matrix(const std::vector<double>& k, std::size_t m) {
    const std::size_t l = k.size(), w = m - l + 1;
    std::vector<std::vector<double>> d(m, std::vector<double>(w, 0.0));
    Tensor kernel = Tensor::row(k);
    for (std::size_t s = 0; s < w; ++s) {
        Tensor basis = Tensor::zeros({w, 1});
        basis.values()[s] = 1.0;
        Tensor out = deconv1d_depthwise(basis, kernel);
        for (std::size_t r = 0; r < m; ++r) d[r][s] = out.at(r, 0);
    }
    return d;
}

}  // namespace

TEST_CASE("linear identity and hand matrix") {
    Tensor x = Tensor::from({1, 2}, {1, 2});
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor y = linear(x, eye);
    CHECK(y.at(0, 0) == doctest::Approx(1.0));
    CHECK(y.at(0, 1) == doctest::Approx(2.0));

    Tensor x2 = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor w = Tensor::from({2, 2}, {2, 3, 4, 5});
    Tensor y2 = linear(x2, w);
    CHECK(y2.at(0, 0) == doctest::Approx(2.0));
    CHECK(y2.at(0, 1) == doctest::Approx(4.0));
    CHECK(y2.at(1, 0) == doctest::Approx(3.0));
    CHECK(y2.at(1, 1) == doctest::Approx(5.0));
}

TEST_CASE("linear bias broadcast and shape errors") {
    Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor w = Tensor::from({2, 3}, {1, 0, 0, 0, 1, 0});
    Tensor b = Tensor::row({10, 20});
    Tensor y = linear(x, w, b);
    CHECK(y.at(0, 0) == doctest::Approx(11.0));
    CHECK(y.at(1, 1) == doctest::Approx(25.0));

    Tensor bad = Tensor::from({2, 4}, {0, 0, 0, 0, 0, 0, 0, 0});
    CHECK_THROWS_AS(linear(x, bad), DimensionError);
    CHECK_THROWS_WITH_AS(linear(x, bad), doctest::Contains("[2 3]"), DimensionError);
}

TEST_CASE("linear gradient vs finite differences on random 3x4") {
    Rng rng(7);
    Tensor x = random_tensor({3, 4}, rng);
    Tensor w = random_tensor({5, 4}, rng);
    Tensor b = random_tensor({5}, rng);
    auto fn = [](const std::vector<Tensor>& in) { return sum(linear(in[0], in[1], in[2])); };
    auto report = check_gradients(fn, {x, w, b}, 1e-6);
    CHECK(report.passed());
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("softmax examples") {
    Tensor u = softmax(Tensor::row({0, 0, 0}));
    for (std::size_t i = 0; i < 3; ++i) CHECK(u.at(i) == doctest::Approx(1.0 / 3.0));

    Tensor s = softmax(Tensor::row({1000, 0}));
    CHECK(s.at(0) == doctest::Approx(1.0));
    CHECK(s.at(1) == doctest::Approx(0.0));
    CHECK(std::isfinite(s.at(0)));

    Tensor t = softmax(Tensor::row({std::log(2.0), 0.0}));
    CHECK(t.at(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(t.at(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    Tensor bad = Tensor::row({0.0, std::nan("")});
    CHECK_THROWS_AS(softmax(bad), NumericError);
}

TEST_CASE("softmax rows sum to one on random input, both axes") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(6), d = 1 + rng.uniform_index(6);
        Tensor x = random_tensor({n, d}, rng, false);
        for (double& v : x.values()) v *= 50.0;
        Tensor p = softmax(x, 1);
        for (std::size_t r = 0; r < n; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) s += p.at(r, c);
            CHECK(std::fabs(s - 1.0) < 1e-9);
        }
        Tensor q = softmax(x, 0);
        for (std::size_t c = 0; c < d; ++c) {
            double s = 0.0;
            for (std::size_t r = 0; r < n; ++r) s += q.at(r, c);
            CHECK(std::fabs(s - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("layer_norm examples and gradient") {
    Tensor x = Tensor::from({1, 3}, {5, 5, 5});
    Tensor g = Tensor::row({1, 1, 1});
    Tensor o = Tensor::row({0, 0, 0});
    Tensor y = layer_norm(x, g, o);
    for (std::size_t c = 0; c < 3; ++c) CHECK(y.at(0, c) == doctest::Approx(0.0));

    Tensor x2 = Tensor::from({1, 2}, {1, -1});
    Tensor g2 = Tensor::row({1, 1});
    Tensor o2 = Tensor::row({0, 0});
    Tensor y2 = layer_norm(x2, g2, o2, 1e-12);
    CHECK(y2.at(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(y2.at(0, 1) == doctest::Approx(-1.0).epsilon(1e-6));

    CHECK_THROWS_AS(layer_norm(Tensor::zeros({2, 0}), Tensor::zeros({0}), Tensor::zeros({0})),
                    DimensionError);

    Rng rng(3);
    Tensor xr = random_tensor({4, 6}, rng);
    Tensor gr = random_tensor({6}, rng);
    Tensor orr = random_tensor({6}, rng);
    auto fn = [](const std::vector<Tensor>& in) {
        return sum(mul(layer_norm(in[0], in[1], in[2]), in[3]));
    };
    Tensor weights = random_tensor({4, 6}, rng, false);
    auto report = check_gradients(fn, {xr, gr, orr, weights}, 1e-5);
    CHECK(report.passed());
}

TEST_CASE("layer_norm rows are standardized pre-affine") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(5), d = 2 + rng.uniform_index(7);
        Tensor x = random_tensor({n, d}, rng, false);
        for (double& v : x.values()) v *= 3.0;
        Tensor y = layer_norm(x, Tensor::full({d}, 1.0), Tensor::zeros({d}), 1e-12);
        for (std::size_t r = 0; r < n; ++r) {
            double mu = 0.0, var = 0.0;
            for (std::size_t c = 0; c < d; ++c) mu += y.at(r, c);
            mu /= static_cast<double>(d);
            for (std::size_t c = 0; c < d; ++c) {
                const double t = y.at(r, c) - mu;
                var += t * t;
            }
            var /= static_cast<double>(d);
            CHECK(std::fabs(mu) < 1e-6);
            CHECK(std::fabs(var - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("activation fixed points") {
    CHECK(gelu(Tensor::scalar(0.0)).item() == doctest::Approx(0.0));
    CHECK(leaky_relu(Tensor::scalar(-1.0), 0.2).item() == doctest::Approx(-0.2));
    CHECK(elu(Tensor::scalar(1.0)).item() == doctest::Approx(1.0));
    CHECK(act_from_string("gelu") == Act::Gelu);
    CHECK_THROWS_AS(act_from_string("tanhh"), ConfigError);
}

TEST_CASE("conv1d_depthwise examples") {
    Tensor seq = Tensor::from({3, 2}, {1, 2, 3, 1, 0, 5});

    Tensor selector = Tensor::row({1, 0});
    Tensor picked = conv1d_depthwise(seq, selector);
    CHECK(picked.rows() == 2);
    CHECK(picked.at(0, 0) == doctest::Approx(1.0));
    CHECK(picked.at(0, 1) == doctest::Approx(2.0));
    CHECK(picked.at(1, 0) == doctest::Approx(3.0));
    CHECK(picked.at(1, 1) == doctest::Approx(1.0));

    Tensor ones = Tensor::row({1, 1});
    Tensor summed = conv1d_depthwise(seq, ones);
    CHECK(summed.at(0, 0) == doctest::Approx(4.0));
    CHECK(summed.at(0, 1) == doctest::Approx(3.0));
    CHECK(summed.at(1, 0) == doctest::Approx(3.0));
    CHECK(summed.at(1, 1) == doctest::Approx(6.0));

    CHECK_THROWS_AS(conv1d_depthwise(Tensor::zeros({1, 2}), Tensor::row({1, 1, 1})),
                    DimensionError);

    Rng rng(5);
    Tensor s = random_tensor({5, 3}, rng);
    Tensor k = random_tensor({2}, rng);
    auto fn = [](const std::vector<Tensor>& in) {
        return sum(conv1d_depthwise(in[0], in[1]));
    };
    auto report = check_gradients(fn, {s, k}, 1e-6);
    CHECK(report.passed());
}

TEST_CASE("deconv1d_depthwise examples") {
    Tensor ones = Tensor::row({1, 1});
    Tensor rep = Tensor::from({2, 1}, {2.5, 2.5});
    Tensor up = deconv1d_depthwise(rep, ones);
    CHECK(up.rows() == 3);
    CHECK(up.at(0, 0) == doctest::Approx(2.5));
    CHECK(up.at(1, 0) == doctest::Approx(5.0));
    CHECK(up.at(2, 0) == doctest::Approx(2.5));

    Tensor sel = Tensor::row({1, 0});
    Tensor in = Tensor::from({2, 1}, {3.0, 4.0});
    Tensor out = deconv1d_depthwise(in, sel);
    CHECK(out.at(0, 0) == doctest::Approx(3.0));
    CHECK(out.at(1, 0) == doctest::Approx(4.0));
    CHECK(out.at(2, 0) == doctest::Approx(0.0));

    Rng rng(9);
    Tensor s = random_tensor({4, 2}, rng);
    Tensor k = random_tensor({3}, rng);
    auto fn = [](const std::vector<Tensor>& in) {
        return sum(deconv1d_depthwise(in[0], in[1]));
    };
    auto report = check_gradients(fn, {s, k}, 1e-6);
    CHECK(report.passed());
}

TEST_CASE("deconv operator equals conv matrix transpose for m<=6, l<=3") {
    Rng rng(13);
    for (std::size_t l = 1; l <= 3; ++l) {
        for (std::size_t m = l; m <= 6; ++m) {
            std::vector<double> k(l);
            for (double& v : k) v = rng.uniform(-2.0, 2.0);
            auto c = conv_matrix(k, m);
            auto d = deconv_matrix(k, m);
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t s = 0; s < c.size(); ++s) CHECK(d[r][s] == c[s][r]);
        }
    }
}

TEST_CASE("deconv is the adjoint of conv") {
    Rng rng(19);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t l = 1 + rng.uniform_index(3);
        const std::size_t m = l + rng.uniform_index(6 - l + 1);
        const std::size_t d = 1 + rng.uniform_index(4);
        Tensor x = random_tensor({m, d}, rng, false);
        Tensor y = random_tensor({m - l + 1, d}, rng, false);
        Tensor k = random_tensor({l}, rng, false);
        const Tensor cx = conv1d_depthwise(x, k);
        const Tensor dy = deconv1d_depthwise(y, k);
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < cx.size(); ++i) lhs += cx.values()[i] * y.values()[i];
        for (std::size_t i = 0; i < x.size(); ++i) rhs += x.values()[i] * dy.values()[i];
        CHECK(std::fabs(lhs - rhs) < 1e-10);
    }
}

TEST_CASE("check_gradients closed form and usage error") {
    Tensor x = Tensor::from({3}, {1, 2, 3}, true);
    auto fn = [](const std::vector<Tensor>& in) { return sum(mul(in[0], in[0])); };
    auto report = check_gradients(fn, {x}, 1e-7);
    CHECK(report.passed());
    CHECK(report.max_rel_error < 1e-7);
    fn(std::vector<Tensor>{x});
    x.zero_grad();
    Tensor loss = sum(mul(x, x));
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
    CHECK(x.grad()[2] == doctest::Approx(6.0));

    auto constant = [](const std::vector<Tensor>&) { return Tensor::scalar(4.0); };
    auto creport = check_gradients(constant, {x}, 1e-12);
    CHECK(creport.max_rel_error == 0.0);

    auto vector_valued = [](const std::vector<Tensor>& in) { return add(in[0], in[0]); };
    CHECK_THROWS_AS(check_gradients(vector_valued, {x}, 1e-4), UsageError);
}

TEST_CASE("every differentiable op passes finite differences on random shapes") {
    Rng rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(7), d = 2 + rng.uniform_index(7);
        Tensor a = random_tensor({n, d}, rng);
        Tensor b = random_tensor({n, d}, rng);
        Tensor w = random_tensor({d, d}, rng);
        Tensor v = random_tensor({d}, rng);
        Tensor probe = random_tensor({n, d}, rng, false);

        auto check = [&](const char* name,
                         std::function<Tensor(const std::vector<Tensor>&)> fn,
                         std::vector<Tensor> args) {
            auto report = check_gradients(fn, args, 1e-4);
            INFO(name << " max rel err " << report.max_rel_error);
            CHECK(report.passed());
        };

        check("add", [](const std::vector<Tensor>& in) { return sum(add(in[0], in[1])); },
              {a, b});
        check("sub+mul",
              [&](const std::vector<Tensor>& in) {
                  return sum(mul(sub(in[0], in[1]), probe));
              },
              {a, b});
        check("scale", [](const std::vector<Tensor>& in) { return sum(scale(in[0], 1.7)); },
              {a});
        check("add_rowvec",
              [&](const std::vector<Tensor>& in) {
                  return sum(mul(add_rowvec(in[0], in[1]), probe));
              },
              {a, v});
        check("matmul",
              [](const std::vector<Tensor>& in) { return sum(matmul(in[0], in[1])); }, {a, w});
        check("matmul_nt",
              [](const std::vector<Tensor>& in) { return sum(matmul_nt(in[0], in[1])); },
              {a, w});
        check("transpose+mean",
              [](const std::vector<Tensor>& in) { return mean(transpose(in[0])); }, {a});
        check("softmax",
              [&](const std::vector<Tensor>& in) { return sum(mul(softmax(in[0]), probe)); },
              {a});
        check("log_softmax",
              [&](const std::vector<Tensor>& in) {
                  return sum(mul(log_softmax_rows(in[0]), probe));
              },
              {a});
        check("gelu", [](const std::vector<Tensor>& in) { return sum(gelu(in[0])); }, {a});
        check("leaky_relu",
              [](const std::vector<Tensor>& in) { return sum(leaky_relu(in[0], 0.2)); }, {a});
        check("elu", [](const std::vector<Tensor>& in) { return sum(elu(in[0])); }, {a});
        check("concat+slice",
              [&](const std::vector<Tensor>& in) {
                  Tensor c = concat_rows({in[0], in[1]});
                  Tensor s = slice_rows(c, 1, n + 1);
                  return sum(mul(s, probe));
              },
              {a, b});
        check("concat_cols+slice_cols",
              [&](const std::vector<Tensor>& in) {
                  Tensor c = concat_cols({in[0], in[1]});
                  return sum(slice_cols(c, 1, d + 1));
              },
              {a, b});
        check("max_rows", [](const std::vector<Tensor>& in) { return sum(max_rows(in[0])); },
              {a});
        check("reshape",
              [&](const std::vector<Tensor>& in) {
                  return sum(mul(reshape(reshape(in[0], {n * d}), {n, d}), probe));
              },
              {a});
        check("embedding",
              [&](const std::vector<Tensor>& in) {
                  return sum(embedding_rows(in[0], {0, d - 1, 0}));
              },
              {w});
    }
}

TEST_CASE("repeated backward accumulates leaf gradients") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    Tensor loss = sum(mul(x, x));
    loss.backward();
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(4.0));
    CHECK(x.grad()[1] == doctest::Approx(8.0));
    x.zero_grad();
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("tensor serialization round trip") {
    Rng rng(29);
    Tensor t = random_tensor({3, 5}, rng, false);
    std::stringstream ss;
    write_tensor(ss, t);
    Tensor back = read_tensor(ss);
    REQUIRE(back.shape() == t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(back.values()[i] == t.values()[i]);

    std::stringstream junk("NOPE");
    CHECK_THROWS_AS(read_tensor(junk), DataError);
}

TEST_CASE("dropout inverted scaling and eval passthrough") {
    Rng rng(31);
    Tensor x = Tensor::full({50, 10}, 1.0, true);
    Tensor y = dropout(x, 0.4, rng, true);
    std::size_t zeros = 0;
    for (double v : y.values()) {
        if (v == 0.0)
            ++zeros;
        else
            CHECK(v == doctest::Approx(1.0 / 0.6));
    }
    CHECK(zeros > 100);
    CHECK(zeros < 300);
    Tensor e = dropout(x, 0.4, rng, false);
    CHECK(e.node() == x.node());
}
