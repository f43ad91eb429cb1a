#include <doctest.h>

#include <map>
#include <numeric>

#include "gradcheck.hpp"
#include "lmdvit/errors.hpp"
#include "lmdvit/windowing.hpp"

using namespace lmdvit;
using lmdvit::testing::random_tensor;

namespace {

Tensor iota(Shape shape) {
  std::vector<double> v(shape_numel(shape));
  std::iota(v.begin(), v.end(), 0.0);
  return Tensor::from(std::move(shape), std::move(v));
}

WindowMask random_mask(std::size_t n, CounterRng& rng) {
  WindowMask m(n);
  for (auto& b : m) b = rng.uniform() < 0.5 ? 1 : 0;
  return m;
}

}  // namespace

TEST_CASE("partition layout is row-major") {
  const Tensor x = iota({1, 4, 4});
  const auto grid = WindowGrid::make(1, 4, 4, 2, false);
  CHECK(grid.count() == 4);
  const Tensor w = partition(x, grid);
  CHECK(w.shape() == Shape{4, 4, 1});
  CHECK(w.values()[0] == 0);
  CHECK(w.values()[1] == 1);
  CHECK(w.values()[2] == 4);
  CHECK(w.values()[3] == 5);
  // Second window starts at column 2.
  CHECK(w.values()[4] == 2);
}

TEST_CASE("degenerate grid holds every token") {
  const Tensor x = iota({3, 4, 4});
  const auto grid = WindowGrid::make(3, 4, 4, 4, false);
  const Tensor w = partition(x, grid);
  CHECK(w.shape() == Shape{1, 16, 3});
  // Token 5 is (1,1); channel 2 lives at 2*16 + 5 in the input.
  CHECK(w.values()[5 * 3 + 2] == 2 * 16 + 5);
}

TEST_CASE("partition and shift round-trips are exact") {
  CounterRng rng(2);
  for (bool shifted : {false, true}) {
    const Tensor x = random_tensor({3, 8, 12}, rng);
    const auto grid = WindowGrid::make(3, 8, 12, 4, shifted);
    CHECK(grid.shift == (shifted ? 2u : 0u));
    const Tensor shifted_x = cyclic_shift(x, grid.shift, ShiftDirection::forward);
    const Tensor back = cyclic_shift(window_reverse(partition(shifted_x, grid), grid), grid.shift,
                                     ShiftDirection::inverse);
    CHECK(back.values() == x.values());
  }
}

TEST_CASE("indivisible extents are rejected") {
  CHECK_THROWS_AS((void)WindowGrid::make(1, 6, 8, 4, false), DimensionError);
}

TEST_CASE("cyclic shift moves the origin") {
  const Tensor x = iota({1, 4, 4});
  CHECK(cyclic_shift(x, 0, ShiftDirection::forward).values() == x.values());
  const Tensor s = cyclic_shift(x, 2, ShiftDirection::forward);
  CHECK(s.values()[2 * 4 + 2] == 0.0);
  CHECK(cyclic_shift(s, 2, ShiftDirection::inverse).values() == x.values());
}

TEST_CASE("gather and scatter") {
  CounterRng rng(4);
  const Tensor w = random_tensor({6, 4, 3}, rng);
  const WindowMask all(6, 1), none(6, 0);
  CHECK(gather_kept(w, all).values() == w.values());
  CHECK(scatter_back(w, w, all).values() == w.values());
  CHECK(scatter_back(Tensor{}, w, none).values() == w.values());

  // Property: identity payload round-trips for random patterns; doubled payload only touches kept windows.
  for (int trial = 0; trial < 50; ++trial) {
    const WindowMask keep = random_mask(6, rng);
    if (count_kept(keep) == 0) continue;
    const Tensor g = gather_kept(w, keep);
    CHECK(g.dim(0) == count_kept(keep));
    CHECK(scatter_back(g, w, keep).values() == w.values());
    const Tensor doubled = scatter_back(ops::scale(g, 2.0), w, keep);
    for (std::size_t n = 0; n < 6; ++n) {
      for (std::size_t i = 0; i < 12; ++i) {
        const double expect = keep[n] ? 2.0 * w.at(n * 12 + i) : w.at(n * 12 + i);
        CHECK(doubled.at(n * 12 + i) == expect);
      }
    }
  }
  WindowMask two(6, 0);
  two[1] = two[4] = 1;
  CHECK_THROWS_AS((void)scatter_back(Tensor::zeros({3, 4, 3}), w, two), DimensionError);
}

TEST_CASE("relative position index matches pair enumeration") {
  for (std::size_t w : {1u, 2u, 3u, 4u, 8u}) {
    // Oracle: number each displacement (dy, dx) in lexicographic order of (dy, dx).
    std::map<std::pair<long, long>, std::size_t> id;
    for (long dy = -static_cast<long>(w - 1); dy <= static_cast<long>(w - 1); ++dy) {
      for (long dx = -static_cast<long>(w - 1); dx <= static_cast<long>(w - 1); ++dx) {
        const std::size_t next = id.size();
        id[{dy, dx}] = next;
      }
    }
    const auto index = relative_position_index(w);
    const std::size_t T = w * w;
    REQUIRE(index.size() == T * T);
    bool all_match = true;
    for (std::size_t i = 0; i < T; ++i) {
      for (std::size_t j = 0; j < T; ++j) {
        const long dy = static_cast<long>(i / w) - static_cast<long>(j / w);
        const long dx = static_cast<long>(i % w) - static_cast<long>(j % w);
        all_match = all_match && index[i * T + j] == id[{dy, dx}] && index[i * T + j] < (2 * w - 1) * (2 * w - 1);
      }
    }
    CHECK(all_match);
  }
}

TEST_CASE("position bias table receives gradients") {
  CounterRng rng(1);
  auto table = RelativePositionTable::make(2, 3, rng);
  const Tensor b = table.bias();
  CHECK(b.shape() == Shape{3, 4, 4});
  backward(ops::sum(b));
  // Each of the 9 displacements appears with multiplicity (2-|dy|)(2-|dx|).
  const auto g = table.table.grad();
  CHECK(g[4 * 3 + 0] == 4.0);  // displacement (0,0)
  CHECK(g[0] == 1.0);          // displacement (-1,-1)
}
