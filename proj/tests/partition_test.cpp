#include <gtest/gtest.h>

#include "pty/partition.hpp"
#include "test_util.hpp"

using namespace pty;

TEST(MakeStrips, FourWorkers) {
  const auto p = make_strips(100, 100, 8, 4);
  EXPECT_EQ(p.halo, 7u);
  EXPECT_EQ(p.interior, (std::vector<RowRange>{{0, 25}, {25, 50}, {50, 75}, {75, 100}}));
  EXPECT_EQ(p.extended, (std::vector<RowRange>{{0, 32}, {18, 57}, {43, 82}, {68, 100}}));
}

TEST(MakeStrips, SingleWorker) {
  const auto p = make_strips(37, 20, 8, 1);
  EXPECT_EQ(p.interior[0], (RowRange{0, 37}));
  EXPECT_EQ(p.extended[0], (RowRange{0, 37}));
}

TEST(MakeStrips, RemainderGoesToLowIds) {
  const auto p = make_strips(103, 10, 8, 4);
  EXPECT_EQ(p.interior[0].size(), 26u);
  EXPECT_EQ(p.interior[2].size(), 26u);
  EXPECT_EQ(p.interior[3].size(), 25u);
}

TEST(MakeStrips, Infeasible) {
  try {
    make_strips(10, 10, 8, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    EXPECT_NE(std::string(e.what()).find("at most 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(make_strips(100, 100, 8, 0), Error);
}

TEST(MakeStrips, InvariantsOverSizes) {
  for (std::size_t h : {32u, 63u, 64u, 129u, 256u}) {
    for (int w = 1; w <= static_cast<int>(h / 8); w *= 2) {
      const auto p = make_strips(h, 16, 8, w);
      std::size_t covered = 0;
      for (int i = 0; i < w; ++i) {
        const auto& in = p.interior[static_cast<std::size_t>(i)];
        const auto& ex = p.extended[static_cast<std::size_t>(i)];
        EXPECT_EQ(in.begin, covered);
        covered = in.end;
        EXPECT_LE(ex.begin, in.begin);
        EXPECT_GE(ex.end, in.end);
        if (i + 1 < w) EXPECT_GE(ex.end - p.interior[static_cast<std::size_t>(i) + 1].begin, p.halo);
        if (i > 0) EXPECT_GE(p.interior[static_cast<std::size_t>(i)].begin - ex.begin, p.halo);
      }
      EXPECT_EQ(covered, h);
    }
  }
}

TEST(LocalPatterns, Examples) {
  const auto p = make_strips(100, 100, 8, 4);
  const ScanSet scan = {{30, 0}, {24, 0}, {25, 0}};
  const auto local = local_pattern_set(p, scan, 8);
  EXPECT_EQ(local[0], (std::vector<std::size_t>{1}));
  EXPECT_EQ(local[1], (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_TRUE(local[2].empty());
}

TEST(LocalPatterns, MatchesIntervalOracle) {
  const auto p = make_strips(128, 128, 32, 4);
  const auto scan = pty::testing::random_scan(200, 128, 128, 32, 5);
  const auto local = local_pattern_set(p, scan, 32);
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<std::size_t> expect;
    for (std::size_t j = 0; j < scan.size(); ++j) {
      bool hit = false;
      for (std::size_t r = static_cast<std::size_t>(scan[j].row); r < static_cast<std::size_t>(scan[j].row) + 32; ++r) {
        hit = hit || (r >= p.interior[i].begin && r < p.interior[i].end);
      }
      if (hit) expect.push_back(j);
    }
    EXPECT_EQ(local[i], expect);
  }
}

TEST(OwnerOf, Examples) {
  const auto p = make_strips(100, 100, 8, 4);
  EXPECT_EQ(owner_of(p, {24, 0}, 8), 1);
  EXPECT_EQ(owner_of(p, {0, 0}, 8), 0);
  EXPECT_EQ(owner_of(p, {92, 0}, 8), 3);
}

TEST(OwnerOf, EveryPatternOwnedOnceAndLocally) {
  const auto p = make_strips(128, 128, 32, 4);
  const auto scan = pty::testing::random_scan(150, 128, 128, 32, 9);
  const auto local = local_pattern_set(p, scan, 32);
  for (std::size_t j = 0; j < scan.size(); ++j) {
    const auto o = static_cast<std::size_t>(owner_of(p, scan[j], 32));
    EXPECT_TRUE(std::binary_search(local[o].begin(), local[o].end(), j));
  }
}

TEST(MakeShards, RebasedScanAndData) {
  const auto ds = pty::testing::medium_fixture();
  const auto part = make_strips(ds.height, ds.width, 32, 2);
  const auto shards = make_shards(part, *ds.psi_ref, ds.scan, ds.d);
  std::size_t owned = 0;
  for (const auto& s : shards) {
    EXPECT_EQ(s.psi_ext.rows(), s.extended.size());
    ASSERT_EQ(s.local_scan.size(), s.global_index.size());
    for (std::size_t k = 0; k < s.global_index.size(); ++k) {
      const auto g = s.global_index[k];
      EXPECT_EQ(s.local_scan[k].row + static_cast<int>(s.extended.begin), ds.scan[g].row);
      EXPECT_EQ(s.local_scan[k].col, ds.scan[g].col);
      EXPECT_TRUE(bitwise_equal(s.local_d.slice(k), ds.d.slice(g)));
      owned += s.owned[k] ? 1 : 0;
    }
    for (std::size_t r = 0; r < s.psi_ext.rows(); ++r) {
      EXPECT_TRUE(bitwise_equal(s.psi_ext.row(r), ds.psi_ref->row(s.extended.begin + r)));
    }
  }
  EXPECT_EQ(owned, ds.scan.size());
}
