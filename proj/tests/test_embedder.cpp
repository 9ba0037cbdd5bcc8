#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

#include "openset/data_io.hpp"
#include "openset/embedder.hpp"
#include "openset/error.hpp"
#include "oracles.hpp"

using namespace openset;

namespace {

EmbedderModel identity_model(std::size_t dim) {
    Layer l;
    l.weights = Matrix(dim, dim);
    for (std::size_t i = 0; i < dim; ++i) l.weights(i, i) = 1.0;
    l.bias.assign(dim, 0.0);
    l.activation = Activation::identity;
    return EmbedderModel({l});
}

Vector random_vector(std::mt19937_64& gen, std::size_t dim, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    Vector v(dim);
    for (auto& x : v) x = nd(gen);
    return v;
}

EmbedderModel random_model(std::mt19937_64& gen, std::size_t in, std::size_t hidden, std::size_t out) {
    const std::size_t hidden_dims[] = {hidden};
    auto m = EmbedderModel::initialize(in, hidden_dims, out, gen());
    // non-zero biases so relu boundaries are not all at the origin
    for (auto& layer : m.mutable_layers()) {
        for (auto& b : layer.bias) b = std::uniform_real_distribution<double>(-0.3, 0.3)(gen);
    }
    return m;
}

Triplet view(const Vector& a, const Vector& p, const Vector& n) {
    return Triplet{a, p, n, "A", "A", "B"};
}

std::vector<Record> clustered(std::size_t classes, std::size_t per_class, std::size_t dim,
                              double separation, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.train_classes = classes;
    cfg.dev_known = cfg.dev_novel = cfg.test_known = cfg.test_novel = 0;
    cfg.samples_per_class = per_class;
    cfg.feature_dim = dim;
    cfg.cluster_separation = separation;
    cfg.center_gap_factor = 1.0;
    cfg.train_fraction = 1.0;
    cfg.seed = seed;
    return generate_synthetic(cfg).train;
}

} // namespace

TEST_CASE("forward") {
    SUBCASE("zero model gives a zero vector") {
        Layer l{Matrix(3, 2), Vector(3, 0.0), Activation::relu};
        Layer h{Matrix(2, 3), Vector(2, 0.0), Activation::identity};
        const EmbedderModel m({l, h});
        CHECK(forward(m, Vector{4.0, -2.0}) == Vector{0.0, 0.0});
    }
    SUBCASE("single identity layer") {
        CHECK(forward(identity_model(2), Vector{1.0, 2.0}) == Vector{1.0, 2.0});
    }
    SUBCASE("random model equals the scalar-loop oracle") {
        std::mt19937_64 gen(21);
        for (int trial = 0; trial < 20; ++trial) {
            const auto m = random_model(gen, 5, 7, 3);
            const auto x = random_vector(gen, 5);
            CHECK(forward(m, x) == oracle::forward(m, x));
        }
    }
    SUBCASE("dimension mismatch") {
        try {
            (void)forward(identity_model(2), Vector{1.0, 2.0, 3.0});
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::dimension_mismatch);
        }
    }
}

TEST_CASE("model construction validates shapes") {
    Layer a{Matrix(3, 2), Vector(3, 0.0), Activation::relu};
    Layer b{Matrix(2, 4), Vector(2, 0.0), Activation::identity};
    CHECK_THROWS_AS(EmbedderModel({a, b}), Error);
    Layer bad_bias{Matrix(3, 2), Vector(2, 0.0), Activation::relu};
    CHECK_THROWS_AS(EmbedderModel({bad_bias}), Error);
    Layer nan_w{Matrix(1, 1, NAN), Vector(1, 0.0), Activation::identity};
    CHECK_THROWS_AS(EmbedderModel({nan_w}), Error);
    CHECK_THROWS_AS(EmbedderModel(std::vector<Layer>{}), Error);
}

TEST_CASE("initialize: default shape and Glorot bounds") {
    const std::size_t hidden[] = {32};
    const auto m = EmbedderModel::initialize(10, hidden, 16, 3);
    REQUIRE(m.layers().size() == 2);
    CHECK(m.input_dim() == 10);
    CHECK(m.embed_dim() == 16);
    CHECK(m.layers()[0].activation == Activation::relu);
    CHECK(m.layers()[1].activation == Activation::identity);
    const double limit0 = std::sqrt(6.0 / 42.0);
    for (double w : m.layers()[0].weights.data) CHECK(std::fabs(w) <= limit0);
    CHECK(m == EmbedderModel::initialize(10, hidden, 16, 3));
    CHECK_FALSE(m == EmbedderModel::initialize(10, hidden, 16, 4));
}

TEST_CASE("triplet_loss examples") {
    CHECK(triplet_loss(Vector{0.0}, Vector{0.2}, Vector{1.5}, 1.0) == 0.0);
    CHECK(triplet_loss(Vector{0.0}, Vector{1.0}, Vector{0.5}, 1.0) == 1.5);
    const Vector v{0.3, -1.0};
    CHECK(triplet_loss(v, v, v, 1.0) == 1.0);
    CHECK_THROWS_AS((void)triplet_loss(Vector{0.0}, Vector{0.0, 1.0}, Vector{0.0}, 1.0), Error);
}

TEST_CASE("triplet gradient: inactive hinge is exactly zero") {
    std::mt19937_64 gen(8);
    const auto m = random_model(gen, 3, 4, 2);
    const Vector a{0.1, 0.2, 0.3};
    const Vector far = {50.0, -40.0, 60.0};
    TrainConfig cfg;
    cfg.margin = 0.5;
    const auto eval = evaluate_triplet(m, view(a, a, far), cfg);
    REQUIRE(oracle::hinge_argument(m, a, a, far, cfg.margin, 2.0) < 0.0);
    CHECK(eval.loss == 0.0);
    CHECK(eval.gradients.all_zero());
    CHECK(triplet_loss_gradient(m, view(a, a, far), cfg).all_zero());
}

TEST_CASE("triplet gradient: identity model matches finite differences") {
    const auto m = identity_model(1);
    const Vector a{0.0}, p{1.0}, n{0.5};
    TrainConfig cfg;
    cfg.margin = 1.0;
    cfg.p_norm = 2.0;
    const auto eval = evaluate_triplet(m, view(a, p, n), cfg);
    CHECK(eval.loss == 1.5);
    const auto fd = oracle::finite_difference_check(m, eval.gradients, a, p, n, 1.0, 2.0);
    CHECK(fd.checked == 2);
    CHECK(fd.max_rel_error <= 1e-4);
    // loss = |w*0 - w*1| - |w*0 - w*0.5| + 1 with biases cancelling => dL/dw = 1 - 0.5
    CHECK(eval.gradients.weights[0].data[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(eval.gradients.biases[0][0] == 0.0);
}

TEST_CASE("triplet gradient: random relu models match finite differences") {
    std::mt19937_64 gen(1234);
    for (double p_norm : {2.0, 1.5, 3.0}) {
        int active = 0;
        for (int trial = 0; trial < 25; ++trial) {
            const auto m = random_model(gen, 4, 6, 3);
            const auto a = random_vector(gen, 4), p = random_vector(gen, 4), n = random_vector(gen, 4);
            TrainConfig cfg;
            cfg.margin = 2.0;
            cfg.p_norm = p_norm;
            const double arg = oracle::hinge_argument(m, a, p, n, cfg.margin, p_norm);
            if (std::fabs(arg) < 1e-6 || oracle::min_relu_margin(m, {a, p, n}) < 1e-4) continue;
            active += arg > 0.0;
            const auto eval = evaluate_triplet(m, view(a, p, n), cfg);
            CHECK(eval.loss == doctest::Approx(std::max(arg, 0.0)).epsilon(1e-12));
            const auto fd = oracle::finite_difference_check(m, eval.gradients, a, p, n, cfg.margin, p_norm);
            CHECK(fd.checked == m.parameter_count());
            CHECK(fd.max_rel_error <= 1e-4);
        }
        CHECK(active > 10);
    }
}

TEST_CASE("triplet gradient errors") {
    TrainConfig cfg;
    const Vector a{1.0};
    SUBCASE("label constraint") {
        const Triplet bad{a, a, a, "A", "B", "C"};
        CHECK_THROWS_AS(evaluate_triplet(identity_model(1), bad, cfg), Error);
        const Triplet same_neg{a, a, a, "A", "A", "A"};
        CHECK_THROWS_AS(evaluate_triplet(identity_model(1), same_neg, cfg), Error);
    }
    SUBCASE("non-finite intermediate names the layer") {
        Layer l0{Matrix(1, 1, 1.0), Vector(1, 0.0), Activation::relu};
        Layer l1{Matrix(1, 1, 1e308), Vector(1, 0.0), Activation::identity};
        const EmbedderModel m({l0, l1});
        const Vector big{1e10};
        try {
            (void)evaluate_triplet(m, view(big, big, big), cfg);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::numeric);
            CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
        }
    }
}

TEST_CASE("mine_triplets") {
    std::mt19937_64 gen(77);
    const auto model = random_model(gen, 3, 5, 2);

    SUBCASE("batch hard matches exhaustive enumeration") {
        std::vector<Record> batch;
        for (int i = 0; i < 4; ++i) {
            batch.push_back({"s" + std::to_string(i), i < 2 ? "A" : "B", std::nullopt, random_vector(gen, 3)});
        }
        TrainConfig cfg;
        cfg.mining = Mining::batch_hard;
        const auto triplets = mine_triplets(batch, model, cfg);
        REQUIRE(triplets.size() == 4);
        for (const auto& t : triplets) {
            const auto fa = oracle::forward(model, batch[t.anchor].values);
            double far = -1.0, near = INFINITY;
            std::size_t want_p = 0, want_n = 0;
            for (std::size_t j = 0; j < batch.size(); ++j) {
                if (j == t.anchor) continue;
                const double d = oracle::distance(fa, oracle::forward(model, batch[j].values), 2.0);
                if (batch[j].label == batch[t.anchor].label) {
                    if (d > far) far = d, want_p = j;
                } else if (d < near) {
                    near = d, want_n = j;
                }
            }
            CHECK(t.positive == want_p);
            CHECK(t.negative == want_n);
        }
    }
    SUBCASE("single class is an error") {
        std::vector<Record> batch{{"a", "A", std::nullopt, {1, 2, 3}}, {"b", "A", std::nullopt, {3, 2, 1}}};
        CHECK_THROWS_AS(mine_triplets(batch, model, TrainConfig{}), Error);
    }
    SUBCASE("random mode is seeded and respects labels") {
        const auto data = clustered(3, 6, 3, 2.0, 5);
        TrainConfig cfg;
        cfg.seed = 99;
        const auto t1 = mine_triplets(data, model, cfg);
        const auto t2 = mine_triplets(data, model, cfg);
        CHECK(t1 == t2);
        CHECK(t1.size() == data.size());
        for (const auto& t : t1) {
            CHECK(t.anchor != t.positive);
            CHECK(data[t.anchor].label == data[t.positive].label);
            CHECK(data[t.anchor].label != data[t.negative].label);
        }
        cfg.seed = 100;
        CHECK_FALSE(mine_triplets(data, model, cfg) == t1);
    }
}

TEST_CASE("Adam: first step moves each parameter by about lr against the gradient") {
    const auto start = identity_model(2);
    auto model = start;
    AdamState adam(model);
    auto g = Gradients::zeros_like(model);
    g.weights[0].data = {0.5, -2.0, 0.0, 1e-3};
    g.biases[0] = {-1.0, 3.0};
    TrainConfig cfg;
    cfg.learning_rate = 0.01;
    adam.step(model, g, cfg);
    CHECK(adam.steps() == 1);
    const auto& w = model.layers()[0].weights.data;
    CHECK(w[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(w[1] == doctest::Approx(0.0 + 0.01).epsilon(1e-6));
    CHECK(w[2] == 0.0);
    CHECK(w[3] == doctest::Approx(1.0 - 0.01).epsilon(1e-4));
    CHECK(model.layers()[0].bias[1] == doctest::Approx(-0.01).epsilon(1e-6));

    // second step with the same gradient: m_hat = g, v_hat = g^2 again
    adam.step(model, g, cfg);
    CHECK(model.layers()[0].weights.data[0] == doctest::Approx(1.0 - 0.02).epsilon(1e-6));
}

TEST_CASE("train") {
    const auto data = clustered(3, 40, 6, 2.5, 4);
    const std::size_t hidden[] = {32};
    const auto init = EmbedderModel::initialize(6, hidden, 16, 1);

    SUBCASE("zero epochs leaves the model untouched") {
        TrainConfig cfg;
        cfg.epochs = 0;
        const auto r = train(init, data, cfg);
        CHECK(r.model == init);
        CHECK(r.loss_trace.empty());
    }
    SUBCASE("loss falls and held-out classes separate") {
        TrainConfig cfg;
        cfg.epochs = 50;
        cfg.learning_rate = 1e-3;
        const auto [fit, held_out] = split_per_class(data, 0.75);
        const auto r = train(init, fit, cfg);
        REQUIRE(r.loss_trace.size() == 50);
        CHECK(r.loss_trace.front() > 0.0);
        CHECK(r.loss_trace.back() < r.loss_trace.front());

        double intra = 0, inter = 0;
        std::size_t n_intra = 0, n_inter = 0;
        for (std::size_t i = 0; i < held_out.size(); ++i) {
            for (std::size_t j = i + 1; j < held_out.size(); ++j) {
                const double d = pnorm_distance(forward(r.model, held_out[i].values),
                                                forward(r.model, held_out[j].values));
                if (held_out[i].label == held_out[j].label) {
                    intra += d;
                    ++n_intra;
                } else {
                    inter += d;
                    ++n_inter;
                }
            }
        }
        CHECK(intra / n_intra < inter / n_inter);
    }
    SUBCASE("same seed gives bit-identical parameters") {
        TrainConfig cfg;
        cfg.epochs = 5;
        cfg.mining = Mining::batch_hard;
        const auto a = train(init, data, cfg);
        const auto b = train(init, data, cfg);
        CHECK(a.model == b.model);
        CHECK(a.loss_trace == b.loss_trace);
        cfg.seed += 1;
        CHECK_FALSE(train(init, data, cfg).model == a.model);
    }
    SUBCASE("invalid config and data") {
        TrainConfig cfg;
        cfg.margin = 0.0;
        CHECK_THROWS_AS(train(init, data, cfg), Error);
        cfg = TrainConfig{};
        cfg.adam_beta1 = 1.0;
        CHECK_THROWS_AS(train(init, data, cfg), Error);
        std::vector<Record> one_class(data.begin(), data.begin() + 10);
        CHECK_THROWS_AS(train(init, one_class, TrainConfig{}), Error);
    }
}

TEST_CASE("checkpoint round trip is value-exact") {
    std::mt19937_64 gen(2);
    const auto m = random_model(gen, 7, 9, 4);
    const auto text = checkpoint_to_string(m);
    CHECK(checkpoint_from_string(text) == m);
    CHECK(text.find("\"version\"") != std::string::npos);

    auto path = std::filesystem::temp_directory_path() / "openset_ckpt_test.json";
    save_checkpoint(m, path);
    CHECK(load_checkpoint(path) == m);
    std::filesystem::remove(path);

    CHECK_THROWS_AS(checkpoint_from_string("{\"version\": 99, \"layers\": []}"), Error);
    CHECK_THROWS_AS(checkpoint_from_string("not json"), Error);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.json"), Error);
}
