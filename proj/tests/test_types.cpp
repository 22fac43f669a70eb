#include "pixphys/types.hpp"

#include <doctest.h>

using namespace pixphys;

TEST_CASE("uniform_times produces an evenly spaced grid") {
  Vector t = uniform_times(0.5, 0.25, 5);
  REQUIRE(t.size() == 5);
  CHECK(t(0) == doctest::Approx(0.5));
  CHECK(t(4) == doctest::Approx(1.5));
  for (int i = 1; i < 5; ++i) CHECK(t(i) - t(i - 1) == doctest::Approx(0.25));
}

TEST_CASE("TrajectorySeries validate accepts uniform finite data") {
  TrajectorySeries s;
  s.times = uniform_times(0.0, 0.1, 4);
  s.states = Matrix::Random(4, 2);
  CHECK_NOTHROW(s.validate());
  CHECK(s.dt() == doctest::Approx(0.1));
  CHECK(s.samples() == 4);
  CHECK(s.dim() == 2);
}

TEST_CASE("TrajectorySeries validate rejects bad data") {
  TrajectorySeries s;
  s.times = uniform_times(0.0, 0.1, 4);
  s.states = Matrix::Zero(4, 2);

  SUBCASE("row count mismatch") {
    s.states = Matrix::Zero(3, 2);
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  }
  SUBCASE("non-uniform spacing") {
    s.times(2) += 1e-6;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  }
  SUBCASE("non-finite state") {
    s.states(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  }
  SUBCASE("negative dt") {
    s.times = -uniform_times(0.0, 0.1, 4);
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  }
}

TEST_CASE("TrajectorySeries head and slice") {
  TrajectorySeries s;
  s.times = uniform_times(0.0, 1.0, 6);
  s.states = Matrix::Zero(6, 1);
  for (int i = 0; i < 6; ++i) s.states(i, 0) = 10.0 * i;

  TrajectorySeries h = s.head(3);
  CHECK(h.samples() == 3);
  CHECK(h.states(2, 0) == 20.0);

  TrajectorySeries m = s.slice(2, 3);
  CHECK(m.samples() == 3);
  CHECK(m.times(0) == 2.0);
  CHECK(m.states(0, 0) == 20.0);
  CHECK(m.states(2, 0) == 40.0);
}

TEST_CASE("FieldSeries channel lookup and slicing") {
  FieldSeries f;
  f.grid = {16, 16, 0.5, 0.5};
  f.times = uniform_times(0.0, 0.1, 3);
  f.channel_names = {"u", "v"};
  f.channels = {{Matrix::Zero(16, 16), Matrix::Ones(16, 16), Matrix::Constant(16, 16, 2.0)},
                {Matrix::Zero(16, 16), Matrix::Zero(16, 16), Matrix::Zero(16, 16)}};
  CHECK_NOTHROW(f.validate());
  CHECK(f.has_channel("u"));
  CHECK_FALSE(f.has_channel("w"));
  CHECK(f.channel("u")[1](0, 0) == 1.0);
  CHECK_THROWS_WITH_AS(f.channel("w"), "FieldSeries: no channel named 'w'",
                       std::invalid_argument);

  FieldSeries tail = f.slice(1, 2);
  CHECK(tail.steps() == 2);
  CHECK(tail.channel("u")[0](0, 0) == 1.0);
  CHECK(tail.channel("u")[1](0, 0) == 2.0);
  CHECK(tail.times(0) == doctest::Approx(0.1));
  CHECK_THROWS_AS(f.slice(2, 2), std::out_of_range);
}

TEST_CASE("FieldSeries validate rejects inconsistent shapes") {
  FieldSeries f;
  f.grid = {16, 16, 0.5, 0.5};
  f.times = uniform_times(0.0, 0.1, 2);
  f.channel_names = {"u"};
  f.channels = {{Matrix::Zero(16, 16), Matrix::Zero(16, 15)}};
  CHECK_THROWS_AS(f.validate(), std::invalid_argument);

  f.channels = {{Matrix::Zero(16, 16)}};
  CHECK_THROWS_AS(f.validate(), std::invalid_argument);  // step count mismatch
}
