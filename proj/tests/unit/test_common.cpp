#include "streamforge/common.hpp"

#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <set>

using namespace streamforge;

TEST_CASE("sha256 matches published test vectors") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("anonymize is stable and hides the raw id") {
    const auto a = anonymize("alice_1987");
    CHECK(a == anonymize("alice_1987"));
    CHECK(a != anonymize("bob"));
    CHECK(a.find("alice") == std::string::npos);
}

TEST_CASE("rng is reproducible and bounded") {
    Rng a(7);
    Rng b(7);
    for (int i = 0; i < 100; ++i) {
        const auto x = a.below(13);
        CHECK(x == b.below(13));
        CHECK(x < 13);
        const double u = a.unit();
        CHECK(u == b.unit());
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    CHECK(derive_seed(1, "x") != derive_seed(1, "y"));
    CHECK(derive_seed(1, "x", 0) != derive_seed(1, "x", 1));
    CHECK(derive_seed(1, "x") == derive_seed(1, "x"));
}

TEST_CASE("sample_indices draws distinct indices in range") {
    Rng r(99);
    for (std::size_t n : {1u, 5u, 40u}) {
        for (std::size_t k = 0; k <= n; ++k) {
            auto idx = r.sample_indices(n, k);
            CHECK(idx.size() == k);
            std::set<std::size_t> uniq(idx.begin(), idx.end());
            CHECK(uniq.size() == k);
            CHECK(std::all_of(idx.begin(), idx.end(), [&](std::size_t i) { return i < n; }));
        }
    }
}

TEST_CASE("shuffle is a permutation") {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) {
        v[i] = i;
    }
    auto w = v;
    Rng(3).shuffle(w);
    CHECK(w != v);
    std::sort(w.begin(), w.end());
    CHECK(w == v);
}

TEST_CASE("text helpers") {
    CHECK(normalize_value("  Hello   World \t") == "hello world");
    CHECK(trim("\n x \n") == "x");
    CHECK(contains_ci("Price Range", "RANGE"));
    CHECK_FALSE(contains_ci("abc", "abd"));
    CHECK(split("a,b,,c", ',') == std::vector<std::string>{"a", "b", "", "c"});
    std::vector<std::string> parts{"x", "y", "z"};
    CHECK(join(parts, "-") == "x-y-z");
    CHECK(utf8_length("你好a") == 3);
    CHECK(utf8_length("") == 0);
}

TEST_CASE("parallel_for visits every index once and rethrows") {
    std::vector<std::atomic<int>> hits(200);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
    CHECK(std::all_of(hits.begin(), hits.end(), [](const auto& h) { return h.load() == 1; }));
    CHECK_THROWS_AS(parallel_for(10, 3,
                                 [](std::size_t i) {
                                     if (i == 5) {
                                         throw Error("boom");
                                     }
                                 }),
                    Error);
}
