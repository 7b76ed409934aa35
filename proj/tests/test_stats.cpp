#include <doctest.h>

#include "fscplan/alergia.hpp"
#include "fscplan/stats.hpp"

using namespace fscplan;

TEST_CASE("iqm of a constant sample") {
  SampleSummary s = iqm_iqr({5, 5, 5, 5});
  CHECK(s.iqm == doctest::Approx(5.0));
  CHECK(s.iqr == doctest::Approx(0.0));
}

TEST_CASE("iqm drops floor(n/4) from each side") {
  std::vector<double> xs;
  for (int i = 1; i <= 10; ++i) xs.push_back(i);
  SampleSummary s = iqm_iqr(xs);
  CHECK(s.iqm == doctest::Approx(5.5));  // mean of 3..8
}

TEST_CASE("iqm of a single sample") {
  SampleSummary s = iqm_iqr({7});
  CHECK(s.iqm == doctest::Approx(7.0));
  CHECK(s.iqr == doctest::Approx(0.0));
}

TEST_CASE("iqm is order invariant") {
  std::vector<double> a = {3, 1, 4, 1, 5, 9, 2, 6};
  std::vector<double> b = {9, 6, 5, 4, 3, 2, 1, 1};
  CHECK(iqm_iqr(a).iqm == doctest::Approx(iqm_iqr(b).iqm));
  CHECK(iqm_iqr(a).iqr == doctest::Approx(iqm_iqr(b).iqr));
}

TEST_CASE("sign test exact tails") {
  std::vector<double> ten_above(10, 1.0);
  SignTestResult r = sign_test(ten_above, 0.0);
  CHECK(r.p_value == doctest::Approx(9.765625e-4).epsilon(1e-12));

  // 5 of 10 above: sum_{j>=5} C(10,j)/1024 = 638/1024.
  std::vector<double> half = {1, 1, 1, 1, 1, -1, -1, -1, -1, -1};
  r = sign_test(half, 0.0);
  CHECK(r.p_value == doctest::Approx(638.0 / 1024.0).epsilon(1e-12));

  std::vector<double> none(10, -1.0);
  r = sign_test(none, 0.0);
  CHECK(r.p_value == doctest::Approx(1.0));
}

TEST_CASE("sign test drops ties and handles all-tie input") {
  SignTestResult r = sign_test({1.0, 2.0, 2.0, 3.0}, 2.0);
  CHECK(r.effective_n == 2);
  CHECK(r.above == 1);
  r = sign_test({2.0, 2.0}, 2.0);
  CHECK_FALSE(r.defined);
}

TEST_CASE("sign test p is monotone in the number of successes") {
  double prev = 1.1;
  for (int k = 0; k <= 10; ++k) {
    std::vector<double> xs;
    for (int i = 0; i < 10; ++i) xs.push_back(i < k ? 1.0 : -1.0);
    double p = sign_test(xs, 0.0).p_value;
    CHECK(p <= prev);
    CHECK(p > 0.0);
    CHECK(p <= 1.0);
    prev = p;
  }
}

TEST_CASE("chi-squared survival function reference points") {
  // Textbook critical values.
  CHECK(chi_squared_survival(3.841458820694124, 1) ==
        doctest::Approx(0.05).epsilon(1e-9));
  CHECK(chi_squared_survival(5.991464547107979, 2) ==
        doctest::Approx(0.05).epsilon(1e-9));
  CHECK(chi_squared_survival(7.814727903251179, 3) ==
        doctest::Approx(0.05).epsilon(1e-9));
  CHECK(chi_squared_survival(0.0, 1) == doctest::Approx(1.0));
}

TEST_CASE("quantiles interpolate linearly") {
  CHECK(quantile({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));
  CHECK(quantile({1, 2, 3, 4}, 0.75) == doctest::Approx(3.25));
}
