#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "maxentmil/io.hpp"

using namespace maxentmil;

namespace {

LabeledBagDataset small_dataset() {
  std::mt19937_64 rng(1);
  LabeledBagDataset ds;
  ds.bags.push_back({"first", "pos", testing::gaussian_matrix(3, 2, rng)});
  ds.bags.push_back({"second, quoted", "neg", testing::gaussian_matrix(2, 2, rng)});
  ds.bags.push_back({"third", "pos", testing::gaussian_matrix(4, 2, rng)});
  return ds;
}

void check_same(const LabeledBagDataset& a, const LabeledBagDataset& b) {
  REQUIRE(a.bags.size() == b.bags.size());
  for (std::size_t i = 0; i < a.bags.size(); ++i) {
    CHECK(a.bags[i].bag_id == b.bags[i].bag_id);
    CHECK(a.bags[i].label == b.bags[i].label);
    CHECK(a.bags[i].instances == b.bags[i].instances);
  }
}

std::size_t parse_line(const std::string& text, bool csv) {
  std::istringstream in(text);
  try {
    csv ? read_dataset_csv(in, "t") : read_dataset_jsonl(in, "t");
  } catch (const ParseError& e) {
    return e.line();
  }
  return std::numeric_limits<std::size_t>::max();
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("format_double round-trips") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> normal(0.0, 1e3);
    for (int t = 0; t < 1000; ++t) {
      const double v = normal(rng);
      CHECK(std::stod(format_double(v)) == v);
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(2.0) == "2");
  }

  TEST_CASE("datasets round-trip through both formats byte-stably") {
    const LabeledBagDataset ds = small_dataset();
    std::ostringstream j1, c1;
    write_dataset_jsonl(j1, ds);
    write_dataset_csv(c1, ds);
    std::istringstream ji(j1.str()), ci(c1.str());
    const LabeledBagDataset fj = read_dataset_jsonl(ji);
    const LabeledBagDataset fc = read_dataset_csv(ci);
    check_same(ds, fj);
    check_same(ds, fc);
    std::ostringstream j2, c2;
    write_dataset_jsonl(j2, fj);
    write_dataset_csv(c2, fc);
    CHECK(j1.str() == j2.str());
    CHECK(c1.str() == c2.str());
  }

  TEST_CASE("unlabeled csv") {
    std::istringstream in("bag_id,x1\na,1\na,2\nb,3\n");
    const LabeledBagDataset ds = read_dataset_csv(in);
    REQUIRE(ds.bags.size() == 2);
    CHECK(ds.bags[0].instances.rows() == 2);
    CHECK(ds.bags[1].label.empty());
  }

  TEST_CASE("parse errors carry line numbers") {
    CHECK(parse_line("{\"bag_id\":\"a\",\"instances\":[[1,2]]}\n{oops\n", false) == 2);
    CHECK(parse_line("{\"bag_id\":\"a\",\"instances\":[[1,2]]}\n\n{\"bag_id\":\"b\",\"colour\":1,\"instances\":[[1,2]]}\n",
                     false) == 3);
    CHECK(parse_line("{\"bag_id\":\"a\",\"instances\":[[1,2]]}\n{\"bag_id\":\"b\",\"instances\":[[1]]}\n",
                     false) == 2);
    CHECK(parse_line("bag_id,label,x1,x2\na,pos,1,2\na,pos,1,oops\n", true) == 3);
    CHECK(parse_line("bag_id,label,x1\na,pos,1\na,neg,2\n", true) == 3);
    CHECK(parse_line("bag_id,x1\n\"a,1\n", true) == 2);
  }

  TEST_CASE("an empty bag names its id") {
    std::istringstream in("{\"bag_id\":\"lonely\",\"instances\":[]}\n");
    try {
      read_dataset_jsonl(in, "t");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("lonely") != std::string::npos);
      CHECK(e.line() == 1);
    }
  }

  TEST_CASE("duplicate bag ids are rejected") {
    std::istringstream in("{\"bag_id\":\"a\",\"instances\":[[1]]}\n{\"bag_id\":\"a\",\"instances\":[[2]]}\n");
    CHECK_THROWS(read_dataset_jsonl(in, "t"));
  }

  TEST_CASE("sufficient statistics round-trip") {
    std::vector<SufficientStats> s(2);
    s[0] = {"x", 10, testing::vec({0.1, -0.25, 1.0 / 3.0, 0.0})};
    s[1] = {"y", 7, testing::vec({1e-300, 2.5, -1.0, 0.75})};
    std::ostringstream out;
    write_stats_jsonl(out, s);
    std::istringstream in(out.str());
    const auto back = read_stats_jsonl(in);
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(back[i].bag_id == s[i].bag_id);
      CHECK(back[i].n == s[i].n);
      CHECK(back[i].phi_bar == s[i].phi_bar);
    }
  }

  TEST_CASE("model round-trips and rebuilds its densities") {
    Model m;
    m.basis = make_basis(2, 6, 3);
    m.domain = testing::box(2, 2.0);
    m.points_per_axis = 16;
    m.solver = "cmen";
    std::mt19937_64 rng(4);
    m.lambda = {testing::gaussian_matrix(6, 3, rng, 0.3), {"a", "b", "c"}};
    const Quadrature quad(m.basis, m.grid());
    Mat means;
    m.log_partition = quad.log_partition_batch(m.lambda.data, &means);
    m.mean_phi = means;
    m.standardizer = Standardizer{testing::vec({1, 2}), testing::vec({0.5, 3})};

    const json j = to_json(m);
    CHECK(j.at("format") == "maxentmil-model/1");
    const Model back = model_from_json(j);
    CHECK(back.basis.freqs == m.basis.freqs);
    CHECK(back.lambda.data == m.lambda.data);
    CHECK(back.lambda.bag_ids == m.lambda.bag_ids);
    CHECK(back.log_partition == m.log_partition);
    CHECK(back.standardizer->scale == m.standardizer->scale);
    CHECK_FALSE(back.pca.has_value());
    CHECK(dump(to_json(back)) == dump(j));
    const auto dens = back.densities();
    REQUIRE(dens.size() == 3);
    CHECK(dens[1].logZ == m.log_partition(1));

    json bad = j;
    bad["surprise"] = 1;
    CHECK_THROWS(model_from_json(bad));
  }

  TEST_CASE("phase cells round-trip") {
    PhaseCell c;
    c.m = 20;
    c.T = 5;
    c.recovery_probability = 0.7;
    c.threshold = 1.25;
    c.ranks = {5, 5, -1};
    c.warnings = {false, true, false};
    c.wall_time = 3.5;
    const PhaseCell back = phase_cell_from_json(to_json(c));
    CHECK(back.ranks == c.ranks);
    CHECK(back.warnings == c.warnings);
    CHECK(back.recovery_probability == c.recovery_probability);
    CHECK(back.threshold == c.threshold);
  }

  TEST_CASE("matrix csv layout") {
    Mat d(2, 2);
    d << 0, 1.5, 1.5, 0;
    std::ostringstream out;
    write_matrix_csv(out, d, {"a", "b"});
    CHECK(out.str() == "bag_id,a,b\na,0,1.5\nb,1.5,0\n");
  }
}
