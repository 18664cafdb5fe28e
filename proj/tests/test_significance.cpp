#include <gtest/gtest.h>

#include "support/synthetic.hpp"

using namespace cogeval;
using namespace cogeval::testing;

namespace {

TestResult less(std::vector<double> d) { return wilcoxon_signed_rank(d, Alternative::less); }

std::map<std::string, TestResult> with_p(std::initializer_list<double> ps)
{
    std::map<std::string, TestResult> m;
    int i = 0;
    for (double p : ps) {
        TestResult r;
        r.p_value = p;
        m.emplace("h" + std::to_string(i++), r);
    }
    return m;
}

}  // namespace

TEST(Wilcoxon, AllNegativeFive)
{
    const auto r = less({-1, -2, -3, -4, -5});
    EXPECT_EQ(r.w_statistic, 0.0);
    EXPECT_EQ(r.n_effective, 5u);
    EXPECT_DOUBLE_EQ(r.p_value, 1.0 / 32.0);
    EXPECT_EQ(r.method, TestMethod::exact);
}

TEST(Wilcoxon, OnePositiveDifference)
{
    // the positive difference carries rank 4
    auto r = less({-1, -2, -3, 4});
    EXPECT_EQ(r.w_statistic, 4.0);
    EXPECT_DOUBLE_EQ(r.p_value, 7.0 / 16.0);
    EXPECT_DOUBLE_EQ(r.p_value, brute_force_wilcoxon_p({-1, -2, -3, 4}, false));
    r = less({-1, -2, 3, -4});
    EXPECT_EQ(r.w_statistic, 3.0);
    EXPECT_DOUBLE_EQ(r.p_value, 5.0 / 16.0);
}

TEST(Wilcoxon, AllZeroIsDegenerate)
{
    const auto r = less({0, 0, 0});
    EXPECT_TRUE(r.degenerate);
    EXPECT_EQ(r.n_effective, 0u);
    EXPECT_EQ(r.p_value, 1.0);
    EXPECT_THROW(less({}), Error);
}

TEST(Wilcoxon, ZerosDroppedAndTiesAveraged)
{
    const auto sr = signed_ranks(std::vector<double>{0, 2, -2, 1, 0});
    EXPECT_EQ(sr.ranks.size(), 3u);
    auto sorted = sr.ranks;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, (std::vector<double>{1, 2.5, 2.5}));
    EXPECT_EQ(less({0, 2, -2, 1, 0}).w_statistic, 3.5);
}

TEST(Wilcoxon, ExactMatchesBruteForceWithTies)
{
    Rng rng(2718);
    for (std::size_t n = 1; n <= 12; ++n)
        for (int trial = 0; trial < 40; ++trial) {
            std::vector<double> d(n);
            for (auto& v : d)
                v = trial % 2 ? rng.normal() : double(rng.below(7)) - 3.0;
            if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0; }))
                continue;
            EXPECT_NEAR(wilcoxon_signed_rank(d, Alternative::less).p_value, brute_force_wilcoxon_p(d, false), 1e-12);
            EXPECT_NEAR(wilcoxon_signed_rank(d, Alternative::two_sided).p_value, brute_force_wilcoxon_p(d, true),
                        1e-12);
        }
}

TEST(Wilcoxon, InvariantUnderPositiveRescaling)
{
    Rng rng(6);
    for (std::size_t n : {8u, 30u}) {
        std::vector<double> d(n);
        for (auto& v : d)
            v = rng.normal(-0.2, 1.0);
        const double p = less(d).p_value;
        for (double c : {1e-6, 0.37, 5.0, 1e8}) {
            auto scaled = d;
            for (auto& v : scaled)
                v *= c;
            EXPECT_DOUBLE_EQ(less(scaled).p_value, p);
        }
    }
}

TEST(Wilcoxon, MethodSwitchesAboveTwenty)
{
    Rng rng(1);
    std::vector<double> d(21);
    for (auto& v : d)
        v = rng.normal();
    EXPECT_EQ(less(d).method, TestMethod::normal_approximation);
    d.pop_back();
    EXPECT_EQ(less(d).method, TestMethod::exact);
    const auto forced = wilcoxon_signed_rank(d, Alternative::less, TestMethod::normal_approximation);
    EXPECT_EQ(forced.method, TestMethod::normal_approximation);
    EXPECT_NEAR(forced.p_value, less(d).p_value, 0.01);
    std::vector<double> big(61, -1.0);
    EXPECT_THROW(wilcoxon_signed_rank(big, Alternative::less, TestMethod::exact), Error);
}

TEST(Wilcoxon, DirectionOfLess)
{
    std::vector<double> neg(30), pos(30);
    for (int i = 0; i < 30; ++i) {
        neg[i] = -(i + 1.0);
        pos[i] = i + 1.0;
    }
    EXPECT_LT(less(neg).p_value, 1e-6);
    EXPECT_GT(less(pos).p_value, 0.999);
    EXPECT_LT(wilcoxon_signed_rank(pos, Alternative::two_sided).p_value, 1e-5);
}

TEST(PairErrors, MeanOverBaselines)
{
    const auto e = fake_result("glove", "d", {{"w", 0.1}, {"v", 0.5}});
    const std::vector<ExperimentResult> bs{fake_baseline("glove", 0, "d", {{"w", 0.2}, {"v", 0.5}}),
                                           fake_baseline("glove", 1, "d", {{"w", 0.4}, {"v", 0.5}})};
    const auto h = pair_errors(e, bs);
    EXPECT_DOUBLE_EQ(h.baseline_errors.at("w"), 0.3);
    EXPECT_EQ(h.id, "glove|d|*");
    EXPECT_EQ(h.embedding, "glove");
    const auto d = h.differences();
    ASSERT_EQ(d.size(), 2u);
    EXPECT_DOUBLE_EQ(d[0], 0.0);   // v
    EXPECT_DOUBLE_EQ(d[1], -0.2);  // w
}

TEST(PairErrors, IdenticalMapsGiveZeroDifferences)
{
    const std::map<std::string, double> m{{"a", 0.1}, {"b", 0.2}, {"c", 0.3}};
    const std::vector<ExperimentResult> bs{fake_baseline("e", 0, "d", m)};
    const auto d = pair_errors(fake_result("e", "d", m), bs).differences();
    EXPECT_TRUE(std::all_of(d.begin(), d.end(), [](double v) { return v == 0; }));
    EXPECT_TRUE(wilcoxon_signed_rank(d).degenerate);
}

TEST(PairErrors, MissingWordIsNamed)
{
    const std::vector<ExperimentResult> bs{fake_baseline("e", 0, "d", {{"a", 0.1}})};
    try {
        pair_errors(fake_result("e", "d", {{"a", 0.1}, {"zebra", 0.2}}), bs);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("zebra"), std::string::npos) << e.what();
    }
    EXPECT_THROW(pair_errors(fake_result("e", "d", {{"a", 0.1}}), {}), Error);
}

TEST(Bonferroni, Thresholds)
{
    EXPECT_NEAR(bonferroni_threshold(0.01, 42), 2.3810e-4, 1e-8);
    EXPECT_DOUBLE_EQ(bonferroni_threshold(0.01, 4), 2.5e-3);
    EXPECT_EQ(bonferroni_threshold(0.05, 1), 0.05);
    EXPECT_THROW(bonferroni_threshold(0.0, 3), Error);
    EXPECT_THROW(bonferroni_threshold(1.0, 3), Error);
    EXPECT_THROW(bonferroni_threshold(0.01, 0), Error);
}

TEST(Bonferroni, VerdictIsStrictlyBelowThreshold)
{
    const auto out = bonferroni(with_p({0.0025, 0.0024, 0.5}), 0.01, 4);
    EXPECT_FALSE(out.verdicts.at("h0"));
    EXPECT_TRUE(out.verdicts.at("h1"));
    EXPECT_EQ(out.label(), "1/4");
    EXPECT_DOUBLE_EQ(out.ratio, 0.25);
    EXPECT_THROW(bonferroni(with_p({0.1, 0.2}), 0.01, 1), Error);
}

TEST(Bonferroni, CountMonotoneInN)
{
    Rng rng(9);
    std::map<std::string, TestResult> results;
    for (int i = 0; i < 50; ++i) {
        TestResult r;
        r.p_value = std::pow(rng.uniform01(), 4.0);
        results.emplace("h" + std::to_string(i), r);
    }
    std::size_t previous = results.size();
    for (std::size_t n = 50; n <= 2000; n += 13) {
        const auto out = bonferroni(results, 0.01, n);
        EXPECT_LE(out.significant, previous);
        EXPECT_GE(out.ratio, 0.0);
        EXPECT_LE(out.ratio, 1.0);
        previous = out.significant;
    }
}

TEST(Battery, CountsPerGroupAndOmitsEmptyGroups)
{
    std::vector<ExperimentResult> exps, bases;
    std::map<std::string, double> good, bad, base;
    for (int i = 0; i < 40; ++i) {
        const auto w = "w" + std::to_string(i);
        base[w] = 1.0 + 0.01 * i;
        good[w] = base[w] - 0.5;
        bad[w] = base[w] + 0.5;
    }
    for (int i = 0; i < 4; ++i) {
        const auto emb = "e" + std::to_string(i);
        exps.push_back(fake_result(emb, "zuco", i < 3 ? good : bad));
        bases.push_back(fake_baseline(emb, 0, "zuco", base));
    }
    const auto out = significance_battery(exps, bases, {});
    ASSERT_EQ(out.groups.size(), 1u);
    const auto& eeg = out.groups.at("eeg");
    EXPECT_EQ(eeg.label(), "3/4");
    EXPECT_DOUBLE_EQ(eeg.ratio, 0.75);
    EXPECT_DOUBLE_EQ(eeg.threshold, 2.5e-3);
    EXPECT_EQ(out.records.size(), 4u);
    EXPECT_FALSE(out.groups.contains("fmri"));

    BatteryOptions opt;
    opt.planned_hypotheses["eeg"] = 59;
    opt.dataset_groups["zuco"] = "eeg";
    EXPECT_DOUBLE_EQ(significance_battery(exps, bases, opt).groups.at("eeg").threshold, 0.01 / 59);

    EXPECT_THROW(significance_battery(exps, std::span(bases).first(3), {}), Error);
}

TEST(Battery, ShiftedErrorsAreDetected)
{
    // embedding errors track the baseline's shifted down by 0.1
    int significant = 0;
    constexpr int seeds = 200;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(derive_seed(55, s));
        std::map<std::string, double> base, emb;
        for (int i = 0; i < 200; ++i) {
            const auto w = "w" + std::to_string(i);
            base[w] = rng.uniform(0.2, 1.0);
            emb[w] = base[w] - 0.1 + rng.normal(0.0, 0.2);
        }
        const std::vector<ExperimentResult> bs{fake_baseline("e", 0, "d", base)};
        const auto t = wilcoxon_signed_rank(pair_errors(fake_result("e", "d", emb), bs).differences());
        significant += t.p_value < bonferroni_threshold(0.01, 50) ? 1 : 0;
    }
    EXPECT_GE(significant, 198);
}
