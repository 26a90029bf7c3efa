#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dtn/networks.hpp"

using namespace dtn;
using nn::MatF;

namespace {

MatF random_images(int channels, int batch, uint64_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> u(-1, 1);
    return MatF::NullaryExpr(channels * 32 * 32, batch, [&] { return u(rng); });
}

}  // namespace

TEST_CASE("feature network emits 128-d representations and digit simplexes") {
    net::FeatureNetwork f(1);
    const MatF x = random_images(3, 4, 10);
    const MatF rep = f.features(x, false);
    CHECK(rep.rows() == net::kFeatureDim);
    CHECK(rep.cols() == 4);
    const MatF p = f.classify(x, false);
    CHECK(p.rows() == net::kNumDigits);
    for (int j = 0; j < 4; ++j) CHECK(p.col(j).sum() == doctest::Approx(1.0f).epsilon(1e-4));
}

TEST_CASE("generator maps representations to tanh-bounded 32x32 images") {
    net::GeneratorHead g(2, 1);
    net::FeatureNetwork f(1);
    const MatF rep = f.features(random_images(3, 3, 11), false);
    const MatF img = g.generate(rep, false);
    CHECK(img.rows() == 32 * 32);
    CHECK(img.cols() == 3);
    CHECK(img.minCoeff() >= -1.0f);
    CHECK(img.maxCoeff() <= 1.0f);

    net::GeneratorHead g3(2, 3);
    CHECK(g3.generate(rep, false).rows() == 3 * 32 * 32);
}

TEST_CASE("discriminator emits class simplexes for ternary and binary heads") {
    for (int classes : {3, 2}) {
        net::Discriminator d(3, classes, 1);
        const MatF p = d.discriminate(random_images(1, 5, 12), true);
        CHECK(p.rows() == classes);
        for (int j = 0; j < 5; ++j) CHECK(p.col(j).sum() == doctest::Approx(1.0f).epsilon(1e-4));
    }
}

TEST_CASE("transfer equals the composition bitwise") {
    net::FeatureNetwork f(4);
    net::GeneratorHead g(5, 1);
    const MatF x = random_images(3, 2, 13);
    const MatF a = net::transfer(f, g, x);
    const MatF b = g.generate(f.features(x, false), false);
    CHECK(a == b);
}

TEST_CASE("inference is deterministic and repeatable") {
    net::FeatureNetwork f(6);
    const MatF x = random_images(3, 2, 14);
    CHECK(f.features(x, false) == f.features(x, false));
    net::Discriminator d(7, 3, 1);
    const MatF y = random_images(1, 2, 15);
    CHECK(d.discriminate(y, false) == d.discriminate(y, false));
}

TEST_CASE("identical seeds give identical parameters, different seeds differ") {
    net::FeatureNetwork a(8), b(8), c(9);
    auto ta = a.tensors(), tb = b.tensors(), tc = c.tensors();
    REQUIRE(ta.size() == tb.size());
    bool same = true, diff = false;
    for (size_t i = 0; i < ta.size(); ++i) {
        same = same && (*ta[i].value == *tb[i].value);
        diff = diff || (*ta[i].value != *tc[i].value);
    }
    CHECK(same);
    CHECK(diff);
}

TEST_CASE("wrong input shapes are usage errors") {
    net::FeatureNetwork f(1);
    CHECK_THROWS_AS(f.features(random_images(1, 2, 16), false), UsageError);  // 1ch into f
    net::GeneratorHead g(1, 1);
    CHECK_THROWS_AS(g.generate(MatF::Zero(64, 2), false), UsageError);
    net::Discriminator d(1, 3, 1);
    CHECK_THROWS_AS(d.discriminate(random_images(3, 2, 17), false), UsageError);
    net::BaselineGenerator b(1, 1);
    CHECK_THROWS_AS(b.generate(MatF::Zero(10, 2), false), UsageError);
}

TEST_CASE("baseline generator shares no parameters with a feature network") {
    net::FeatureNetwork f(20);
    net::BaselineGenerator b(20, 1);
    const MatF x = random_images(3, 2, 18);
    const MatF out = b.generate(x, false);
    CHECK(out.rows() == 32 * 32);
    // Same seed, but distinct objects: training one must not move the other.
    auto tf = f.tensors();
    for (auto& t : b.tensors())
        for (auto& u : tf) CHECK(t.value != u.value);
    CHECK(b.encode(x, false).rows() == net::kFeatureDim);
}

TEST_CASE("parameter names are unique and prefixed by network role") {
    net::FeatureNetwork f(1);
    std::set<std::string> names;
    for (auto& t : f.tensors()) {
        CHECK(names.insert(t.name).second);
        const bool ok = t.name.rfind("trunk.", 0) == 0 || t.name.rfind("head.", 0) == 0;
        CHECK(ok);
    }
}
