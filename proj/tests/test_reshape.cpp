#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "dqpp/reshape.hpp"
#include "testutil.hpp"

using namespace dqpp;

namespace {

Tensor3 random_tensor(dqpp::Rng& rng, std::size_t m, std::size_t k,
                      std::size_t p) {
  Tensor3 t(m, k, p);
  for (double& x : t.v) x = next_uniform(rng) * 10.0 - 5.0;
  return t;
}

}  // namespace

TEST_CASE("slice counts and shapes per mode") {
  Tensor3 t(2, 4, 30);

  SliceSet sdmq = reshape(t, ReshapeMode::sdmq);
  REQUIRE(sdmq.slices.size() == 2);
  CHECK(sdmq.slices[0].rows == 4);
  CHECK(sdmq.slices[0].cols == 30);

  SliceSet mdmq = reshape(t, ReshapeMode::mdmq);
  REQUIRE(mdmq.slices.size() == 1);
  CHECK(mdmq.slices[0].rows == 1);
  CHECK(mdmq.slices[0].cols == 240);

  SliceSet mdsq = reshape(t, ReshapeMode::mdsq);
  REQUIRE(mdsq.slices.size() == 4);
  CHECK(mdsq.slices[0].rows == 2);
  CHECK(mdsq.slices[0].cols == 30);

  SliceSet sdsq = reshape(t, ReshapeMode::sdsq);
  REQUIRE(sdsq.slices.size() == 8);
  CHECK(sdsq.slices[0].rows == 1);
  CHECK(sdsq.slices[0].cols == 30);
}

TEST_CASE("index maps match the slicing contracts") {
  dqpp::Rng rng(17);
  Tensor3 t = random_tensor(rng, 2, 4, 30);

  // SDSQ slice i*k + j holds tensor[i, j, .]
  SliceSet sdsq = reshape(t, ReshapeMode::sdsq);
  for (std::size_t beta = 0; beta < 30; ++beta)
    CHECK(sdsq.slices[5].at(0, beta) == t.at(1, 1, beta));

  // MDSQ slice j has row i = tensor[i, j, .]
  SliceSet mdsq = reshape(t, ReshapeMode::mdsq);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t beta = 0; beta < 30; ++beta)
      CHECK(mdsq.slices[3].at(i, beta) == t.at(i, 3, beta));

  // MDMQ flattens in (slab, row, bin) order
  SliceSet mdmq = reshape(t, ReshapeMode::mdmq);
  CHECK(mdmq.slices[0].at(0, (1 * 4 + 2) * 30 + 7) == t.at(1, 2, 7));

  // SDMQ slice i is slab i
  SliceSet sdmq = reshape(t, ReshapeMode::sdmq);
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t beta = 0; beta < 30; ++beta)
      CHECK(sdmq.slices[1].at(j, beta) == t.at(1, j, beta));
}

TEST_CASE("reshape round-trips bit-identically for every mode") {
  dqpp::Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t m = 1 + static_cast<std::size_t>(next_uniform(rng) * 4);
    std::size_t k = 1 + static_cast<std::size_t>(next_uniform(rng) * 6);
    std::size_t p = 1 + static_cast<std::size_t>(next_uniform(rng) * 8);
    Tensor3 t = random_tensor(rng, m, k, p);
    for (ReshapeMode mode : kAllReshapeModes) {
      SliceSet slices = reshape(t, mode);
      Tensor3 back = inverse_reshape(slices, m, k, p);
      CAPTURE(trial, to_string(mode), m, k, p);
      CHECK(back.v == t.v);

      // multiset of values is preserved by the forward map alone
      std::vector<double> flat;
      for (const Matrix& s : slices.slices)
        flat.insert(flat.end(), s.v.begin(), s.v.end());
      std::vector<double> orig = t.v;
      std::sort(flat.begin(), flat.end());
      std::sort(orig.begin(), orig.end());
      CHECK(flat == orig);
    }
  }
}

TEST_CASE("inverse_reshape validates shapes") {
  dqpp::Rng rng(29);
  Tensor3 t = random_tensor(rng, 3, 4, 5);
  SliceSet slices = reshape(t, ReshapeMode::sdmq);

  // wrong slice count
  SliceSet missing = slices;
  missing.slices.pop_back();
  CHECK_THROWS_AS(inverse_reshape(missing, 3, 4, 5), DataError);

  // wrong declared dims
  CHECK_THROWS_AS(inverse_reshape(slices, 4, 4, 5), DataError);
  CHECK_THROWS_AS(inverse_reshape(slices, 3, 5, 5), DataError);
  CHECK_THROWS_AS(inverse_reshape(slices, 3, 4, 0), DataError);
}

TEST_CASE("degenerate tensors are rejected") {
  CHECK_THROWS_AS(reshape(Tensor3(0, 4, 5), ReshapeMode::sdmq), DataError);
  CHECK_THROWS_AS(reshape(Tensor3(2, 0, 5), ReshapeMode::mdmq), DataError);
  CHECK_THROWS_AS(reshape(Tensor3(2, 4, 0), ReshapeMode::sdsq), DataError);
}

TEST_CASE("mode names parse and print") {
  for (ReshapeMode mode : kAllReshapeModes)
    CHECK(parse_reshape_mode(to_string(mode)) == mode);
  CHECK_THROWS_AS(parse_reshape_mode("bogus"), UsageError);
}
