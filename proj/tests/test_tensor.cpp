#include <doctest.h>

#include <cmath>
#include <limits>

#include "stpgn/kv.hpp"
#include "stpgn/tensor.hpp"
#include "test_util.hpp"

using namespace stpgn;

TEST_CASE("tensor shapes and element access") {
  Tensor t = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.size() == 6);
  CHECK(t(1, 2) == 6);
  CHECK(t[4] == 5);
  Tensor r = t.reshaped({3, 2});
  CHECK(r(2, 1) == 6);
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
  CHECK_THROWS_AS(Tensor::from_rows({{1, 2}, {3}}), ShapeError);
  CHECK(Tensor::vector({1, 2, 3}).rows() == 1);
}

TEST_CASE("identity and finiteness") {
  Tensor i = Tensor::identity(3);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) CHECK(i(r, c) == (r == c ? 1.0 : 0.0));
  CHECK(i.all_finite());
  i(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(i.all_finite());
}

TEST_CASE("max_abs_diff requires equal shapes") {
  Tensor a = Tensor::from_rows({{1, 2}});
  Tensor b = Tensor::from_rows({{1, 2.5}});
  CHECK(max_abs_diff(a, b) == doctest::Approx(0.5));
  CHECK_THROWS_AS(max_abs_diff(a, Tensor::matrix(2, 1)), ShapeError);
}

TEST_CASE("format_double round-trips every double it prints") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    const double v = i % 3 == 0 ? u(rng) : std::ldexp(u(rng), static_cast<int>(rng() % 200) - 100);
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(3.0) == "3");
}

TEST_CASE("key-value parsing") {
  const auto kv = KeyValues::parse("a = 1\n# comment\nb = x, y ,z\nflag = true\n");
  CHECK(kv.get_uint("a", 0) == 1);
  CHECK(kv.get_list("b") == std::vector<std::string>{"x", "y", "z"});
  CHECK(kv.get_bool("flag", false));
  CHECK(kv.get_double("missing", 2.5) == 2.5);
  CHECK_THROWS(kv.require_known({"a", "b"}));
  CHECK_THROWS(KeyValues::parse("no equals sign here\n"));
}
