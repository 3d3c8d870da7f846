#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "plume/errors.hpp"
#include "plume/harness.hpp"
#include "plume/tabu.hpp"
#include "test_util.hpp"

using namespace plume;
namespace fs = std::filesystem;

namespace {

RunRecord make_record(std::size_t id, const std::string& type, double init, double fin, std::size_t n = 100,
                      double p = 0.1) {
  RunRecord r;
  r.instance_id = id;
  r.n = n;
  r.p = p;
  r.init_type = type;
  r.init_cost = init;
  r.final_cost = fin;
  r.seed = 7;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// CSV text with the wall-time columns blanked.
std::string strip_wall(const std::string& csv, const std::vector<std::size_t>& cols) {
  std::istringstream in(csv);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    for (std::size_t c : cols)
      if (c < f.size()) f[c].clear();
    for (std::size_t c = 0; c < f.size(); ++c) out << (c ? "," : "") << f[c];
    out << '\n';
  }
  return out.str();
}

const std::vector<std::size_t> kRecordWallCols{7, 8};

fs::path work_dir(const std::string& name) {
  const auto dir = testutil::temp_path("harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ModelCheckpoint tiny_checkpoint(const fs::path& dir, std::size_t n, double p) {
  GenOptions g;
  g.n = n;
  g.p = p;
  g.count = 8;
  g.seed = 1;
  g.out = dir / "train.jsonl";
  cmd_gen(g);
  g.count = 4;
  g.seed = 2;
  g.out = dir / "val.jsonl";
  cmd_gen(g);
  TrainOptions t;
  t.train_path = dir / "train.jsonl";
  t.val_path = dir / "val.jsonl";
  t.out_ckpt = dir / "model.ckpt";
  t.cfg.model.d = 8;
  t.cfg.epochs = 2;
  t.cfg.batch_size = 4;
  t.cfg.optim.lr = 1e-3;
  return cmd_train(t);
}

}  // namespace

TEST_CASE("costs 214.169 vs 257.877 print as a 16.95% gap") {
  BenchSummary s = summarize({make_record(0, "ul", 214.169, 214.169), make_record(0, "random", 257.877, 257.877)});
  REQUIRE(s.pairs.size() == 1);
  CHECK(100.0 * s.pairs[0].gap_init == doctest::Approx(16.95).epsilon(1e-4));
  CHECK(format_summary(s).find("16.95%") != std::string::npos);
}

TEST_CASE("safe_gap") {
  CHECK(safe_gap(90.0, 100.0) == doctest::Approx(0.1));
  CHECK(safe_gap(110.0, 100.0) == doctest::Approx(-0.1));
  CHECK(safe_gap(0.0, 0.0) == 0.0);
  CHECK(safe_gap(5.0, 0.0) == 0.0);
}

TEST_CASE("gap uses the ratio of means") {
  std::vector<RunRecord> recs{make_record(0, "ul", 1.0, 1.0), make_record(0, "random", 2.0, 2.0),
                              make_record(1, "ul", 9.0, 9.0), make_record(1, "random", 10.0, 10.0)};
  const auto s = summarize(recs);
  CHECK(s.pairs[0].gap_init == doctest::Approx(1.0 - 5.0 / 6.0));
}

TEST_CASE("record CSV round trip") {
  std::vector<RunRecord> recs{make_record(0, "ul", 1.0 / 3.0, 0.25), make_record(0, "random", 2.5, 2.0)};
  recs[0].evaluations_used = 123;
  recs[0].wall_ms_search = 0.125;
  recs[1].seed = 18446744073709551615ull;
  const auto path = testutil::temp_path("records.csv");
  write_records(recs, path);
  const auto back = read_records(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].init_cost == 1.0 / 3.0);
  CHECK(back[0].final_cost == 0.25);
  CHECK(back[0].evaluations_used == 123);
  CHECK(back[0].wall_ms_search == 0.125);
  CHECK(back[1].seed == 18446744073709551615ull);
  CHECK(back[1].init_type == "random");
  CHECK_FALSE(back[0].has_generalization_fields());
  CHECK(slurp(path).rfind(std::string(kRunRecordHeader) + "\n", 0) == 0);

  recs[0].train_n = 20;
  recs[0].train_p = 0.7;
  recs[0].stage = "init";
  recs[1].train_n = 20;
  recs[1].train_p = 0.7;
  recs[1].stage = "init";
  write_records(recs, path);
  const auto ext = read_records(path);
  CHECK(ext[1].train_n == 20u);
  CHECK(ext[1].train_p == 0.7);
  CHECK(ext[1].stage == "init");
}

TEST_CASE("malformed record files are rejected") {
  const auto path = testutil::temp_path("bad_records.csv");
  std::ofstream(path) << "instance_id,n,p\n0,1,2\n";
  CHECK_THROWS_AS(read_records(path), ParseError);
  std::ofstream(path) << kRunRecordHeader << "\n0,20,0.5,ul,1,1,0,0,0,1\n1,20,0.5,ul,x,1,0,0,0,1\n";
  try {
    read_records(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  std::ofstream(path) << kRunRecordHeader << "\n0,20,0.5,ul,1,1,0,0,0\n";
  CHECK_THROWS_AS(read_records(path), ParseError);
}

TEST_CASE("verify_record") {
  CHECK_NOTHROW(verify_record(make_record(0, "ul", 2.0, 1.0)));
  CHECK_THROWS_AS(verify_record(make_record(0, "greedy", 2.0, 1.0)), Error);
  auto r = make_record(0, "ul", 1.0, 2.0);
  r.evaluations_used = 10;
  CHECK_THROWS_AS(verify_record(r), Error);
  r = make_record(0, "ul", std::nan(""), 1.0);
  CHECK_THROWS_AS(verify_record(r), Error);
  r = make_record(0, "ul", 1.0, 1.0);
  r.wall_ms_search = -1.0;
  CHECK_THROWS_AS(verify_record(r), Error);
}

TEST_CASE("summary does not depend on record order or file split") {
  std::vector<RunRecord> recs;
  for (std::size_t i = 0; i < 50; ++i) {
    const double base = 10.0 + 0.37 * static_cast<double>(i);
    recs.push_back(make_record(i, "ul", base, base - 1.0, 20, 0.5));
    recs.push_back(make_record(i, "random", base * 1.1, base - 0.5, 20, 0.5));
  }
  const std::string want = format_summary(summarize(recs));
  auto shuffled = recs;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(3));
  CHECK(format_summary(summarize(shuffled)) == want);

  const auto a = testutil::temp_path("split_a.csv");
  const auto b = testutil::temp_path("split_b.csv");
  const auto all = testutil::temp_path("split_all.csv");
  write_records(std::vector<RunRecord>(shuffled.begin(), shuffled.begin() + 37), a);
  write_records(std::vector<RunRecord>(shuffled.begin() + 37, shuffled.end()), b);
  write_records(recs, all);
  CHECK(cmd_report({{a, b}, std::nullopt}) == cmd_report({{all}, std::nullopt}));
  CHECK(cmd_report({{all}, std::nullopt}) == want);
}

TEST_CASE("summary keeps stages apart and skips unpaired cells") {
  std::vector<RunRecord> recs{make_record(0, "ul", 5.0, 4.0, 20, 0.5), make_record(0, "random", 6.0, 4.5, 20, 0.5),
                              make_record(0, "random", 6.0, 6.0, 40, 0.5)};
  recs.push_back(recs[0]);
  recs.back().stage = "ts-1000-25-25";
  recs.back().train_n = 20;
  recs.back().train_p = 0.5;
  const auto s = summarize(recs);
  CHECK(s.groups.size() == 4);
  CHECK(s.pairs.size() == 1);
}

TEST_CASE("zero-flow instances report a zero gap") {
  std::vector<RunRecord> recs{make_record(0, "ul", 0.0, 0.0, 10, 0.0), make_record(0, "random", 0.0, 0.0, 10, 0.0)};
  const auto s = summarize(recs);
  CHECK(s.pairs[0].gap_init == 0.0);
  CHECK(format_summary(s).find("0.00%") != std::string::npos);
}

TEST_CASE("TsSpec parsing and labels") {
  const auto t = TsSpec::parse("10000,100,100");
  CHECK(t.evaluations == 10000);
  CHECK(t.neighbourhood_size == 100);
  CHECK(t.max_fails == 100);
  CHECK(t.label() == "ts-10000-100-100");
  CHECK_THROWS(TsSpec::parse("1,2"));
  CHECK_THROWS(TsSpec::parse("1,b,3"));
}

TEST_CASE("cmd_gen is deterministic and count = 0 gives an empty set") {
  const auto dir = work_dir("gen");
  GenOptions g;
  g.n = 9;
  g.p = 0.3;
  g.count = 5;
  g.seed = 44;
  g.out = dir / "a.jsonl";
  cmd_gen(g);
  g.out = dir / "b.jsonl";
  cmd_gen(g);
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
  CHECK(read_instances(dir / "a.jsonl").instances.size() == 5);

  g.count = 0;
  g.out = dir / "empty.jsonl";
  cmd_gen(g);
  CHECK(read_instances(g.out).instances.empty());
}

TEST_CASE("search with mu = 0 leaves every cost at its initial value") {
  const auto set = generate_instance_set(12, 0.5, 6, 5).instances;
  TsSpec ts;
  ts.evaluations = 0;
  for (const auto& r : search_records(set, nullptr, ts, 3, ExecPolicy::parallel)) {
    CHECK(r.final_cost == r.init_cost);
    CHECK(r.evaluations_used == 0);
  }
}

TEST_CASE("search records: per-instance seeds, ordering and policy independence") {
  const auto set = generate_instance_set(15, 0.5, 8, 6).instances;
  TsSpec ts;
  ts.evaluations = 400;
  const auto a = search_records(set, nullptr, ts, 9, ExecPolicy::serial);
  const auto b = search_records(set, nullptr, ts, 9, ExecPolicy::parallel);
  REQUIRE(a.size() == 8);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].instance_id == i);
    CHECK(a[i].final_cost == b[i].final_cost);
    CHECK(a[i].seed == b[i].seed);
    CHECK(a[i].seed == search_seed(9, set[i]));
    CHECK(a[i].init_cost == objective(set[i], random_permutation(15, random_init_seed(9, set[i]))));
    CHECK(a[i].evaluations_used <= 400);
    CHECK(a[i].final_cost <= a[i].init_cost);
  }
  // Reversing the file reverses the records and changes nothing else.
  std::vector<QapInstance> rev(set.rbegin(), set.rend());
  const auto c = search_records(rev, nullptr, ts, 9, ExecPolicy::serial);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i].final_cost == a[a.size() - 1 - i].final_cost);
}

TEST_CASE("eval-init, search and generalize on a tiny checkpoint") {
  const auto dir = work_dir("pipeline");
  const auto ckpt = tiny_checkpoint(dir, 8, 0.5);
  GenOptions g;
  g.n = 12;
  g.p = 0.5;
  g.count = 5;
  g.seed = 3;
  g.out = dir / "test12.jsonl";
  cmd_gen(g);
  const auto test12 = read_instances(g.out).instances;

  const auto init = eval_init_records(ckpt, test12, 4, ExecPolicy::parallel);
  REQUIRE(init.size() == 10);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(init[2 * i].init_type == "ul");
    CHECK(init[2 * i + 1].init_type == "random");
    CHECK(init[2 * i].init_cost == objective(test12[i], predict_assignment(ckpt.params, ckpt.config, test12[i])));
    CHECK(init[2 * i + 1].wall_ms_inference == 0.0);
  }
  const auto serial = eval_init_records(ckpt, test12, 4, ExecPolicy::serial);
  for (std::size_t k = 0; k < init.size(); ++k) {
    CHECK(serial[k].init_cost == init[k].init_cost);
    CHECK(serial[k].seed == init[k].seed);
  }

  GeneralizeOptions gz;
  gz.ckpt = dir / "model.ckpt";
  gz.data = {g.out};
  gz.ts = {TsSpec::parse("200,10,10")};
  gz.seed = 4;
  gz.csv_out = dir / "gen.csv";
  const auto recs = cmd_generalize(gz);
  CHECK(recs.size() == 20);
  for (const auto& r : recs) {
    CHECK(r.train_n == 8u);
    CHECK(r.train_p == 0.5);
    CHECK(r.n == 12);
  }
  const auto s = summarize(read_records(dir / "gen.csv"));
  CHECK(s.pairs.size() == 2);
  CHECK(slurp(dir / "gen.csv").find(std::string(",") + kGeneralizeExtraHeader) != std::string::npos);
}

TEST_CASE("CLI re-runs are byte-identical apart from wall times") {
  const char* cli = std::getenv("PLUME_CLI");
  if (!cli) {
    MESSAGE("PLUME_CLI not set; skipping");
    return;
  }
  const auto run_pipeline = [cli](const fs::path& dir) {
    const std::string c = std::string("\"") + cli + "\"";
    const auto q = [](const fs::path& p) { return "\"" + p.string() + "\""; };
    const std::vector<std::string> cmds{
        c + " gen --n 8 --p 0.5 --count 8 --seed 1 --out " + q(dir / "train.jsonl"),
        c + " gen --n 8 --p 0.5 --count 4 --seed 2 --out " + q(dir / "val.jsonl"),
        c + " gen --n 10 --p 0.5 --count 4 --seed 3 --out " + q(dir / "test.jsonl"),
        c + " train --train " + q(dir / "train.jsonl") + " --val " + q(dir / "val.jsonl") + " --out " +
            q(dir / "m.ckpt") + " --log " + q(dir / "log.csv") + " --epochs 2 --batch-size 4 --d 8 --lr 1e-3",
        c + " eval-init --ckpt " + q(dir / "m.ckpt") + " --data " + q(dir / "test.jsonl") + " --seed 5 --csv " +
            q(dir / "init.csv"),
        c + " search --data " + q(dir / "test.jsonl") + " --init ckpt --ckpt " + q(dir / "m.ckpt") +
            " --mu 300 --kappa 10 --omega 10 --seed 5 --csv " + q(dir / "ul.csv"),
        c + " search --data " + q(dir / "test.jsonl") + " --init random --mu 300 --kappa 10 --omega 10 --seed 5 --csv " +
            q(dir / "rnd.csv"),
        c + " generalize --ckpt " + q(dir / "m.ckpt") + " --data " + q(dir / "test.jsonl") +
            " --ts 200,10,10 --seed 5 --csv " + q(dir / "gen.csv"),
        c + " report " + q(dir / "ul.csv") + " " + q(dir / "rnd.csv") + " --csv " + q(dir / "summary.csv"),
    };
    for (const auto& cmd : cmds) REQUIRE(std::system((cmd + " > " + q(dir / "stdout.txt")).c_str()) == 0);
  };
  const auto a = work_dir("cli_a");
  const auto b = work_dir("cli_b");
  run_pipeline(a);
  run_pipeline(b);
  for (const char* f : {"train.jsonl", "val.jsonl", "test.jsonl", "m.ckpt"}) CHECK(slurp(a / f) == slurp(b / f));
  for (const char* f : {"init.csv", "ul.csv", "rnd.csv", "gen.csv"})
    CHECK(strip_wall(slurp(a / f), kRecordWallCols) == strip_wall(slurp(b / f), kRecordWallCols));
  CHECK(strip_wall(slurp(a / "log.csv"), {4}) == strip_wall(slurp(b / "log.csv"), {4}));
  CHECK(strip_wall(slurp(a / "summary.csv"), {11, 12}) == strip_wall(slurp(b / "summary.csv"), {11, 12}));

  const std::string bad = std::string("\"") + cli + "\" report " + (a / "test.jsonl").string() + " > /dev/null 2>&1";
  CHECK(std::system(bad.c_str()) != 0);
}
