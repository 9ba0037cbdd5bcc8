#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "openset/error.hpp"
#include "openset/recognizer.hpp"
#include "oracles.hpp"

using namespace openset;

namespace {

Gallery five_a() {
    std::vector<Record> e;
    for (int i = 0; i < 5; ++i) e.push_back({"a" + std::to_string(i), "A", false, {0.0, 0.0}});
    return Gallery(std::move(e), 5);
}

Gallery random_gallery(std::mt19937_64& gen, std::size_t classes, std::size_t shots) {
    std::normal_distribution<double> nd;
    std::vector<Record> e;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t s = 0; s < shots; ++s) {
            e.push_back({std::to_string(c) + "/" + std::to_string(s), "L" + std::to_string(c), false,
                         {nd(gen) + 2.0 * c, nd(gen), nd(gen)}});
        }
    }
    return Gallery(std::move(e), shots);
}

} // namespace

TEST_CASE("recognize follows the Novel / Known branch") {
    const auto g = five_a();
    SUBCASE("below threshold votes") {
        const auto r = recognize(g, 10.0, Vector{0.0, 1.0}, 5);
        CHECK_FALSE(r.novel);
        REQUIRE(r.label);
        CHECK(*r.label == "A");
        CHECK(r.mean_distance == 1.0);
        CHECK(r.votes.at("A") == 5);
    }
    SUBCASE("above threshold is Novel") {
        const auto r = recognize(g, 0.5, Vector{0.0, 1.0}, 5);
        CHECK(r.novel);
        CHECK_FALSE(r.label);
        CHECK(r.votes.empty());
        CHECK(r.neighborhood.top_k.size() == 5);
    }
    SUBCASE("equality is Novel") {
        CHECK(recognize(g, 1.0, Vector{0.0, 1.0}, 5).novel);
        CHECK_FALSE(recognize(g, std::nextafter(1.0, 2.0), Vector{0.0, 1.0}, 5).novel);
    }
    SUBCASE("infinite and negative thresholds") {
        CHECK_FALSE(recognize(g, std::numeric_limits<double>::infinity(), Vector{1e6, 1e6}, 5).novel);
        CHECK(recognize(g, -1.0, Vector{0.0, 0.0}, 5).novel);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(recognize(g, 1.0, Vector{0.0}, 5), Error);
        CHECK_THROWS_AS(recognize(g, NAN, Vector{0.0, 0.0}, 5), Error);
    }
}

TEST_CASE("vote tie-breaks") {
    SUBCASE("equal counts go to the closer label") {
        const Gallery g({{"a", "A", false, {2.0}}, {"b", "B", false, {-1.0}}, {"c", "A", false, {-2.5}},
                         {"d", "B", false, {1.5}}}, 2);
        // neighbors of 0: B(1), B(1.5), A(2), A(2.5) -> 2 each, B closer
        const auto r = recognize(g, 100.0, Vector{0.0}, 4);
        CHECK(*r.label == "B");
    }
    SUBCASE("full tie goes to the smaller label") {
        const Gallery g({{"a", "Z", false, {1.0}}, {"b", "M", false, {-1.0}}}, 1);
        CHECK(*recognize(g, 100.0, Vector{0.0}, 2).label == "M");
    }
    SUBCASE("majority beats distance") {
        const Gallery g({{"a", "A", false, {0.1}}, {"b", "B", false, {0.5}}, {"c", "B", false, {0.6}}}, 2);
        CHECK(*recognize(g, 100.0, Vector{0.0}, 3).label == "B");
    }
    SUBCASE("separate vote_k") {
        const Gallery g({{"a", "A", false, {0.1}}, {"b", "B", false, {0.5}}, {"c", "B", false, {0.6}}}, 2);
        const auto r = recognize(g, 100.0, Vector{0.0}, RecognizerConfig{3, 1, 2.0});
        CHECK(*r.label == "A");
        CHECK(r.neighborhood.top_k.size() == 3);
    }
}

TEST_CASE("Known-path winner equals brute-force sort and tally") {
    std::mt19937_64 gen(2024);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 150; ++trial) {
        const auto g = random_gallery(gen, 3, 5);
        std::vector<std::vector<double>> vecs;
        std::vector<std::string> labels;
        for (const auto& e : g.entries()) {
            vecs.push_back(e.values);
            labels.push_back(e.label);
        }
        const Vector q{nd(gen) * 3 + 2.0, nd(gen), nd(gen)};
        const auto r = recognize(g, std::numeric_limits<double>::infinity(), q, 5);
        const auto want = oracle::knn(vecs, labels, q, 5, 2.0);
        REQUIRE(r.label);
        CHECK(*r.label == want.winner);
        CHECK(r.mean_distance == doctest::Approx(want.mean).epsilon(1e-12));
    }
}

TEST_CASE("winner is stable under gallery permutation") {
    std::mt19937_64 gen(6);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 30; ++trial) {
        const auto g = random_gallery(gen, 3, 5);
        auto entries = g.entries();
        std::shuffle(entries.begin(), entries.end(), gen);
        const Gallery h(entries, 5);
        const Vector q{nd(gen) * 3, nd(gen), nd(gen)};
        CHECK(*recognize(g, 1e9, q, 5).label == *recognize(h, 1e9, q, 5).label);
    }
}

TEST_CASE("recognize_batch") {
    std::mt19937_64 gen(10);
    std::normal_distribution<double> nd;
    const auto g = random_gallery(gen, 3, 5);
    const RecognizerConfig cfg{5, 0, 2.0};
    CHECK(recognize_batch(g, 2.0, {}, cfg).empty());

    std::vector<Vector> queries;
    for (int i = 0; i < 100; ++i) queries.push_back({nd(gen) * 3, nd(gen), nd(gen)});
    const auto batch = recognize_batch(g, 2.0, queries, cfg);
    REQUIRE(batch.size() == 100);
    bool some_novel = false, some_known = false;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto single = recognize(g, 2.0, queries[i], cfg);
        CHECK(batch[i].novel == single.novel);
        CHECK(batch[i].label == single.label);
        CHECK(batch[i].mean_distance == single.mean_distance);
        CHECK(batch[i].votes == single.votes);
        some_novel |= single.novel;
        some_known |= !single.novel;
    }
    CHECK(some_novel);
    CHECK(some_known);

    queries[37].push_back(0.0);
    try {
        (void)recognize_batch(g, 2.0, queries, cfg);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("query 37") != std::string::npos);
    }
}

TEST_CASE("results JSONL round trip") {
    const auto g = five_a();
    std::vector<RecognitionResult> results{recognize(g, 10.0, Vector{0.0, 1.0}, 5),
                                           recognize(g, 0.5, Vector{0.0, 3.0}, 5)};
    const std::vector<std::string> ids{"q1", "q\"2"};
    const auto path = std::filesystem::temp_directory_path() / "openset_results_test.jsonl";
    write_results(ids, results, path);
    const auto back = read_results(path);
    std::filesystem::remove(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].id == "q1");
    CHECK_FALSE(back[0].novel);
    CHECK(*back[0].label == "A");
    CHECK(back[0].votes.at("A") == 5);
    CHECK(back[1].id == "q\"2");
    CHECK(back[1].novel);
    CHECK_FALSE(back[1].label);
    CHECK(back[1].mean_distance == 3.0);
    const auto line = result_to_json_line("x", results[1]);
    CHECK(line.find("votes") == std::string::npos);
    CHECK(line.find("\"verdict\":\"novel\"") != std::string::npos);
}
