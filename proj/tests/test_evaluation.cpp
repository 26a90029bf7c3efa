#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "dtn/evaluation.hpp"
#include "dtn/png_io.hpp"

using namespace dtn;
using nn::MatF;
namespace fs = std::filesystem;

namespace {

MatF randn(int r, int c, uint64_t seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<float> n(0, 1);
    return MatF::NullaryExpr(r, c, [&] { return n(rng); });
}

data::DatasetSplit random_labeled_split(int n, int channels, uint64_t seed) {
    std::mt19937 rng(seed);
    data::DatasetSplit s("toy", {channels, 32, 32}, data::Domain::TARGET);
    std::vector<uint8_t> px(channels * 32 * 32);
    for (int i = 0; i < n; ++i) {
        for (auto& p : px) p = uint8_t(rng());
        s.push_back(px.data(), int(rng() % 10));
    }
    return s;
}

}  // namespace

TEST_CASE("retrieval ranks agree with an exhaustive counting oracle") {
    std::mt19937 rng(77);
    std::normal_distribution<float> n(0, 1);
    for (int inst = 0; inst < 100; ++inst) {
        const int dim = 8, gallery_n = 50;
        MatF gallery = MatF::NullaryExpr(dim, gallery_n, [&] { return n(rng); });
        MatF probe = MatF::NullaryExpr(dim, 1, [&] { return n(rng); });
        const int truth = int(rng() % gallery_n);
        auto result = eval::retrieval_rank_metrics(probe, gallery, {truth});
        // Oracle: 1 + number of gallery entries strictly closer than truth.
        const float d_true = (gallery.col(truth) - probe.col(0)).squaredNorm();
        int closer = 0;
        for (int j = 0; j < gallery_n; ++j)
            if ((gallery.col(j) - probe.col(0)).squaredNorm() < d_true) ++closer;
        REQUIRE(result.ranks.size() == 1);
        CHECK(result.ranks[0] == 1 + closer);
    }
}

TEST_CASE("retrieval summary statistics") {
    MatF gallery(2, 3);
    gallery << 0, 1, 2, 0, 0, 0;
    MatF probes(2, 2);
    probes << 0.1f, 1.9f, 0, 0;
    auto r = eval::retrieval_rank_metrics(probes, gallery, {0, 1});
    CHECK(r.ranks == std::vector<int>{1, 2});
    CHECK(r.median_rank == doctest::Approx(1.5));
    CHECK(r.mean_rank == doctest::Approx(1.5));
    CHECK(r.rank_1 == doctest::Approx(0.5));
    CHECK(r.rank_5 == doctest::Approx(1.0));
    CHECK_THROWS_AS(eval::retrieval_rank_metrics(probes, gallery, {0}), UsageError);
    CHECK_THROWS_AS(eval::retrieval_rank_metrics(probes, gallery, {0, 9}), UsageError);
}

TEST_CASE("retrieval ranks are invariant under isometries") {
    MatF gallery = randn(8, 20, 1);
    MatF probes = randn(8, 4, 2);
    std::vector<int> truth = {3, 7, 0, 19};
    auto base = eval::retrieval_rank_metrics(probes, gallery, truth);

    // Translation.
    MatF shift = randn(8, 1, 3);
    auto t = eval::retrieval_rank_metrics(probes.colwise() + shift.col(0).eval(),
                                          gallery.colwise() + shift.col(0).eval(), truth);
    CHECK(t.ranks == base.ranks);

    // Rotation (QR orthogonal factor).
    Eigen::HouseholderQR<MatF> qr(randn(8, 8, 4));
    MatF q = qr.householderQ();
    auto r = eval::retrieval_rank_metrics(q * probes, q * gallery, truth);
    CHECK(r.ranks == base.ranks);
}

TEST_CASE("nearest neighbor classification matches brute force and breaks ties low") {
    auto queries = random_labeled_split(20, 1, 5);
    MatF gallery = randn(32 * 32, 15, 6);
    std::vector<int> glabels(15);
    for (int i = 0; i < 15; ++i) glabels[i] = i % 10;

    auto rep = eval::domain_adapt_nn(gallery, glabels, queries, "nn");
    int correct = 0;
    for (size_t i = 0; i < queries.size(); ++i) {
        const MatF q = queries.batch({int(i)});
        int best = 0;
        float bd = (gallery.col(0) - q.col(0)).squaredNorm();
        for (int j = 1; j < 15; ++j) {
            const float d = (gallery.col(j) - q.col(0)).squaredNorm();
            if (d < bd) {  // strict: ties keep the lowest index
                bd = d;
                best = j;
            }
        }
        if (glabels[best] == queries.label(i)) ++correct;
    }
    CHECK(rep.correct == correct);
    CHECK(rep.sample_count == 20);

    // Explicit tie: two identical gallery entries with different labels.
    data::DatasetSplit one("one", {1, 32, 32}, data::Domain::TARGET);
    std::vector<uint8_t> px(1024, 7);
    one.push_back(px.data(), 4);
    MatF tie = MatF::Zero(1024, 2);
    tie.col(0).setConstant(data::to_unit_range(7));
    tie.col(1).setConstant(data::to_unit_range(7));
    auto tied = eval::domain_adapt_nn(tie, {4, 9}, one, "tie");
    CHECK(tied.correct == 1);  // index 0 wins, labels match

    CHECK_THROWS_AS(eval::domain_adapt_nn(MatF(1024, 0), {}, one, "x"), UsageError);
}

TEST_CASE("representative selection agrees with brute force including ties") {
    net::FeatureNetwork f(30);
    const nn::TensorShape shape{3, 32, 32};
    eval::TransferFn halve = [](const MatF& x) {
        // A deterministic, feature-shifting fake transfer.
        return MatF((x.topRows(32 * 32) * 0.5f).eval());
    };
    for (uint64_t seed : {40, 41, 42}) {
        MatF imgs = randn(shape.size(), 7, seed).array().tanh();
        const Eigen::Index pick = eval::representative_selection(imgs, shape, f, halve);
        // Brute force.
        Eigen::Index best = -1;
        float bd = 0;
        for (Eigen::Index i = 0; i < 7; ++i) {
            const MatF x = imgs.col(i);
            const MatF fx = f.features(x, false);
            MatF gx = halve(x);
            const MatF gx3 = data::replicate_channels(gx, {1, 32, 32});
            const float d = (f.features(gx3, false) - fx).squaredNorm();
            if (best < 0 || d < bd) {
                bd = d;
                best = i;
            }
        }
        CHECK(pick == best);
    }
    // Tie rule: duplicating the winner leaves the first occurrence chosen.
    MatF imgs = randn(shape.size(), 3, 43).array().tanh();
    const Eigen::Index first = eval::representative_selection(imgs, shape, f, halve);
    MatF dup(shape.size(), 4);
    dup << imgs.col(first), imgs;
    CHECK(eval::representative_selection(dup, shape, f, halve) == 0);
}

TEST_CASE("metrics reports partition counts and round trip through disk") {
    auto queries = random_labeled_split(30, 1, 50);
    MatF gallery = randn(32 * 32, 9, 51);
    std::vector<int> glabels(9, 1);
    auto rep = eval::domain_adapt_nn(gallery, glabels, queries, "partition", "abc123");
    int64_t sum_correct = 0, sum_count = 0;
    for (auto& [digit, c] : rep.per_class_correct) sum_correct += c;
    for (auto& [digit, c] : rep.per_class_count) sum_count += c;
    CHECK(sum_correct == rep.correct);
    CHECK(sum_count == rep.sample_count);

    const fs::path file = fs::temp_directory_path() / "dtn_metrics_test.txt";
    rep.save(file);
    auto loaded = eval::MetricsReport::load(file);
    CHECK(loaded.name == rep.name);
    CHECK(loaded.correct == rep.correct);
    CHECK(loaded.sample_count == rep.sample_count);
    CHECK(loaded.run_config_hash == "abc123");
    CHECK(loaded.per_class_correct == rep.per_class_correct);
    CHECK(loaded.per_class_count == rep.per_class_count);
    fs::remove(file);
}

TEST_CASE("transferred accuracy counts argmax agreements") {
    net::EvalClassifier clf(60);
    auto split = random_labeled_split(12, 3, 61);
    eval::TransferFn gray = [](const MatF& x) {
        return MatF(((x.topRows(1024) + x.middleRows(1024, 1024) + x.bottomRows(1024)) / 3)
                        .eval());
    };
    auto rep = eval::transferred_accuracy(gray, clf, split, "check");
    int correct = 0;
    for (size_t i = 0; i < split.size(); ++i) {
        MatF g = gray(split.batch({int(i)}));
        MatF p = clf.classify(data::replicate_channels(g, {1, 32, 32}), false);
        Eigen::Index arg;
        p.col(0).maxCoeff(&arg);
        if (int(arg) == split.label(i)) ++correct;
    }
    CHECK(rep.correct == correct);
    CHECK(rep.sample_count == 12);
}

TEST_CASE("basis visualization emits one tile per dimension in a square-ish grid") {
    net::GeneratorHead g(70, 1);
    auto grid = eval::basis_visualization(g, net::kFeatureDim);
    CHECK(grid.tiles.cols() == 128);
    CHECK(grid.tile_shape.h == 32);
    CHECK(grid.grid_cols == 12);
    CHECK(grid.grid_rows == 11);
    CHECK(eval::mode_diversity_score(grid) > 0.0);
    CHECK_THROWS_AS(eval::basis_visualization(g, 64), UsageError);

    int w = 0, h = 0;
    auto bytes = eval::grid_to_bytes(grid, &w, &h);
    CHECK(w == 12 * 32);
    CHECK(h == 11 * 32);
    CHECK(bytes.size() == size_t(w) * h);

    const fs::path file = fs::temp_directory_path() / "dtn_grid_test.png";
    eval::save_grid_png(grid, file);
    auto img = png::read(file);
    CHECK(img.width == w);
    CHECK(img.height == h);
    fs::remove(file);
}

TEST_CASE("mode diversity is zero for a collapsed generator output") {
    eval::ImageGrid grid;
    grid.tiles = MatF::Constant(1024, 5, 0.3f);
    grid.tile_shape = {1, 32, 32};
    grid.grid_cols = 3;
    grid.grid_rows = 2;
    CHECK(eval::mode_diversity_score(grid) == doctest::Approx(0.0));
    grid.tiles = MatF::Constant(1024, 1, 0.3f);
    CHECK_THROWS_AS(eval::mode_diversity_score(grid), UsageError);
}
