#include "plume/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>

#include "plume/errors.hpp"
#include "plume/rng.hpp"
#include "plume/tabu.hpp"

namespace plume {

namespace {

constexpr std::uint64_t kRandomInitTag = 1;
constexpr std::uint64_t kSearchTag = 2;

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt_fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

template <class U>
U parse_number(const std::string& field, const char* name, std::size_t line) {
  U v{};
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw ParseError(std::string("bad ") + name + " value '" + field + "'", line);
  return v;
}

// Mean of `values` after sorting, so that the result does not depend on
// the order in which records arrived.
double sorted_mean(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

std::string opt_size(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : "-"; }
std::string opt_double(const std::optional<double>& v) { return v ? fmt_double(*v) : "-"; }

std::string pct(double g) { return fmt_fixed(100.0 * g, 2) + "%"; }

class TextTable {
 public:
  explicit TextTable(std::vector<std::string> header) { rows_.push_back(std::move(header)); }
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }
  std::string str() const {
    std::vector<std::size_t> width(rows_.front().size(), 0);
    for (const auto& r : rows_)
      for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    std::ostringstream os;
    for (const auto& r : rows_) {
      for (std::size_t c = 0; c < r.size(); ++c) {
        if (c) os << "  ";
        os << std::setw(static_cast<int>(width[c])) << r[c];
      }
      os << '\n';
    }
    return os.str();
  }

 private:
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace

void write_records(const std::vector<RunRecord>& records, const std::filesystem::path& path) {
  const bool extended =
      std::any_of(records.begin(), records.end(), [](const RunRecord& r) { return r.has_generalization_fields(); });
  std::ostringstream os;
  os << kRunRecordHeader;
  if (extended) os << ',' << kGeneralizeExtraHeader;
  os << '\n';
  for (const auto& r : records) {
    os << r.instance_id << ',' << r.n << ',' << fmt_double(r.p) << ',' << r.init_type << ','
       << fmt_double(r.init_cost) << ',' << fmt_double(r.final_cost) << ',' << r.evaluations_used << ','
       << fmt_double(r.wall_ms_search) << ',' << fmt_double(r.wall_ms_inference) << ',' << r.seed;
    if (extended)
      os << ',' << opt_size(r.train_n) << ',' << opt_double(r.train_p) << ',' << r.stage;
    os << '\n';
  }
  write_text(path, os.str());
}

std::vector<RunRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty record file " + path.string(), 1);
  bool extended = false;
  if (line == kRunRecordHeader) {
    extended = false;
  } else if (line == std::string(kRunRecordHeader) + "," + kGeneralizeExtraHeader) {
    extended = true;
  } else {
    throw ParseError("schema mismatch in " + path.string() + ": unexpected header '" + line + "'", 1);
  }
  const std::size_t fields = extended ? 13 : 10;
  std::vector<RunRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != fields)
      throw ParseError("schema mismatch: expected " + std::to_string(fields) + " fields, found " +
                           std::to_string(f.size()),
                       lineno);
    RunRecord r;
    r.instance_id = parse_number<std::size_t>(f[0], "instance_id", lineno);
    r.n = parse_number<std::size_t>(f[1], "n", lineno);
    r.p = parse_number<double>(f[2], "p", lineno);
    r.init_type = f[3];
    r.init_cost = parse_number<double>(f[4], "init_cost", lineno);
    r.final_cost = parse_number<double>(f[5], "final_cost", lineno);
    r.evaluations_used = parse_number<std::uint64_t>(f[6], "evaluations_used", lineno);
    r.wall_ms_search = parse_number<double>(f[7], "wall_ms_search", lineno);
    r.wall_ms_inference = parse_number<double>(f[8], "wall_ms_inference", lineno);
    r.seed = parse_number<std::uint64_t>(f[9], "seed", lineno);
    if (extended) {
      if (f[10] != "-") r.train_n = parse_number<std::size_t>(f[10], "train_n", lineno);
      if (f[11] != "-") r.train_p = parse_number<double>(f[11], "train_p", lineno);
      r.stage = f[12];
    }
    try {
      verify_record(r);
    } catch (const Error& e) {
      throw ParseError(e.what(), lineno);
    }
    out.push_back(std::move(r));
  }
  return out;
}

void verify_record(const RunRecord& r) {
  if (r.init_type != "ul" && r.init_type != "random")
    throw Error("record " + std::to_string(r.instance_id) + ": unknown init_type '" + r.init_type + "'");
  if (!std::isfinite(r.init_cost) || !std::isfinite(r.final_cost))
    throw Error("record " + std::to_string(r.instance_id) + ": non-finite cost");
  if (r.evaluations_used > 0 && r.final_cost > r.init_cost)
    throw Error("record " + std::to_string(r.instance_id) + ": final_cost exceeds init_cost after a search");
  if (!(r.wall_ms_search >= 0.0) || !(r.wall_ms_inference >= 0.0))
    throw Error("record " + std::to_string(r.instance_id) + ": negative wall time");
}

double safe_gap(double cost_pred, double cost_baseline) {
  if (cost_baseline == 0.0) return 0.0;
  return gap(cost_pred, cost_baseline);
}

BenchSummary summarize(const std::vector<RunRecord>& records) {
  using CellKey = std::tuple<std::string, std::optional<std::size_t>, std::optional<double>, std::size_t, double>;
  struct Acc {
    std::vector<double> init, final, evals, search, inference;
  };
  std::map<std::tuple<CellKey, std::string>, Acc> groups;
  for (const auto& r : records) {
    verify_record(r);
    auto& a = groups[{CellKey{r.stage, r.train_n, r.train_p, r.n, r.p}, r.init_type}];
    a.init.push_back(r.init_cost);
    a.final.push_back(r.final_cost);
    a.evals.push_back(static_cast<double>(r.evaluations_used));
    a.search.push_back(r.wall_ms_search);
    a.inference.push_back(r.wall_ms_inference);
  }

  BenchSummary s;
  std::map<CellKey, std::pair<const GroupSummary*, const GroupSummary*>> cells;  // (ul, random)
  s.groups.reserve(groups.size());
  for (const auto& [key, a] : groups) {
    const auto& [cell, init_type] = key;
    GroupSummary g;
    std::tie(g.stage, g.train_n, g.train_p, g.n, g.p) = cell;
    g.init_type = init_type;
    g.count = a.init.size();
    g.mean_init = sorted_mean(a.init);
    g.mean_final = sorted_mean(a.final);
    g.mean_evaluations = sorted_mean(a.evals);
    g.mean_wall_ms_search = sorted_mean(a.search);
    g.mean_wall_ms_inference = sorted_mean(a.inference);
    s.groups.push_back(std::move(g));
  }
  for (const auto& g : s.groups) {
    auto& c = cells[CellKey{g.stage, g.train_n, g.train_p, g.n, g.p}];
    if (g.init_type == "ul") c.first = &g;
    if (g.init_type == "random") c.second = &g;
  }
  for (const auto& [cell, pair] : cells) {
    const auto [ul, rnd] = pair;
    if (!ul || !rnd) continue;
    PairSummary p;
    std::tie(p.stage, p.train_n, p.train_p, p.n, p.p) = cell;
    p.ul_count = ul->count;
    p.random_count = rnd->count;
    p.ul_init = ul->mean_init;
    p.random_init = rnd->mean_init;
    p.gap_init = safe_gap(p.ul_init, p.random_init);
    p.ul_final = ul->mean_final;
    p.random_final = rnd->mean_final;
    p.gap_final = safe_gap(p.ul_final, p.random_final);
    s.pairs.push_back(std::move(p));
  }
  return s;
}

std::string format_summary(const BenchSummary& s) {
  std::ostringstream os;
  os << "Per-group means\n";
  TextTable groups({"stage", "train_n", "train_p", "n", "p", "init", "count", "init_cost", "final_cost",
                    "evals", "ms_search", "ms_inference"});
  for (const auto& g : s.groups)
    groups.add({g.stage.empty() ? "-" : g.stage, opt_size(g.train_n), opt_double(g.train_p),
                std::to_string(g.n), fmt_double(g.p), g.init_type, std::to_string(g.count),
                fmt_fixed(g.mean_init, 3), fmt_fixed(g.mean_final, 3), fmt_fixed(g.mean_evaluations, 1),
                fmt_fixed(g.mean_wall_ms_search, 3), fmt_fixed(g.mean_wall_ms_inference, 3)});
  os << groups.str();
  os << "\nUL vs random (gap = 1 - mean UL / mean random)\n";
  TextTable pairs({"stage", "train_n", "train_p", "n", "p", "count", "ul_init", "random_init", "gap_init",
                   "ul_final", "random_final", "gap_final"});
  for (const auto& p : s.pairs)
    pairs.add({p.stage.empty() ? "-" : p.stage, opt_size(p.train_n), opt_double(p.train_p),
               std::to_string(p.n), fmt_double(p.p), std::to_string(p.ul_count), fmt_fixed(p.ul_init, 3),
               fmt_fixed(p.random_init, 3), pct(p.gap_init), fmt_fixed(p.ul_final, 3),
               fmt_fixed(p.random_final, 3), pct(p.gap_final)});
  os << pairs.str();
  return os.str();
}

void write_summary_csv(const BenchSummary& s, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "kind,stage,train_n,train_p,n,p,init_type,count,mean_init,mean_final,mean_evaluations,"
        "mean_wall_ms_search,mean_wall_ms_inference,gap_init,gap_final\n";
  for (const auto& g : s.groups)
    os << "group," << g.stage << ',' << opt_size(g.train_n) << ',' << opt_double(g.train_p) << ',' << g.n << ','
       << fmt_double(g.p) << ',' << g.init_type << ',' << g.count << ',' << fmt_double(g.mean_init) << ','
       << fmt_double(g.mean_final) << ',' << fmt_double(g.mean_evaluations) << ','
       << fmt_double(g.mean_wall_ms_search) << ',' << fmt_double(g.mean_wall_ms_inference) << ",,\n";
  for (const auto& p : s.pairs)
    os << "pair," << p.stage << ',' << opt_size(p.train_n) << ',' << opt_double(p.train_p) << ',' << p.n << ','
       << fmt_double(p.p) << ",ul-vs-random," << p.ul_count << ",,,,,," << fmt_double(p.gap_init) << ','
       << fmt_double(p.gap_final) << '\n';
  write_text(path, os.str());
}

std::string TsSpec::label() const {
  return "ts-" + std::to_string(evaluations) + "-" + std::to_string(neighbourhood_size) + "-" +
         std::to_string(max_fails);
}

TsSpec TsSpec::parse(const std::string& text) {
  const auto f = split(text, ',');
  if (f.size() != 3) throw DomainError("search config must be 'mu,kappa,omega', got '" + text + "'");
  TsSpec t;
  t.evaluations = parse_number<std::uint64_t>(f[0], "mu", 0);
  t.neighbourhood_size = parse_number<std::size_t>(f[1], "kappa", 0);
  t.max_fails = parse_number<std::size_t>(f[2], "omega", 0);
  return t;
}

std::uint64_t random_init_seed(std::uint64_t run_seed, const QapInstance& inst) {
  return derive_seed(run_seed, {inst.seed, kRandomInitTag});
}

std::uint64_t search_seed(std::uint64_t run_seed, const QapInstance& inst) {
  return derive_seed(run_seed, {inst.seed, kSearchTag});
}

InstanceSet cmd_gen(const GenOptions& opt) {
  InstanceSet set = generate_instance_set(opt.n, opt.p, opt.count, opt.seed);
  write_instances(set, opt.out);
  return set;
}

ModelCheckpoint cmd_train(const TrainOptions& opt, std::ostream* echo) {
  const InstanceSet train_set = read_instances(opt.train_path);
  const InstanceSet val_set = read_instances(opt.val_path);
  std::ofstream log;
  if (opt.log_csv) {
    log.open(*opt.log_csv, std::ios::trunc);
    if (!log) throw Error("cannot open " + opt.log_csv->string() + " for writing");
  }
  const std::string header = "epoch,train_loss,val_score,best,wall_ms";
  if (log.is_open()) log << header << '\n';
  if (echo) *echo << header << '\n';
  auto t0 = std::chrono::steady_clock::now();
  const auto on_epoch = [&](const EpochLog& e) {
    const double ms = elapsed_ms(t0);
    t0 = std::chrono::steady_clock::now();
    const std::string row = std::to_string(e.epoch) + "," + fmt_double(e.train_loss) + "," +
                            fmt_double(e.val_score) + "," + (e.best ? "1" : "0") + "," + fmt_double(ms);
    if (log.is_open()) log << row << std::endl;
    if (echo) *echo << row << std::endl;
  };
  ModelCheckpoint ckpt = train(train_set.instances, val_set.instances, opt.cfg, on_epoch);
  save_checkpoint(ckpt, opt.out_ckpt);
  return ckpt;
}

std::vector<RunRecord> eval_init_records(const ModelCheckpoint& ckpt, const std::vector<QapInstance>& instances,
                                         std::uint64_t seed, ExecPolicy policy) {
  std::vector<RunRecord> out(2 * instances.size());
  for_each_index(instances.size(), policy, [&](std::size_t i) {
    const QapInstance& inst = instances[i];
    const auto t0 = std::chrono::steady_clock::now();
    const Permutation ul = predict_assignment(ckpt.params, ckpt.config, inst);
    const double inference_ms = elapsed_ms(t0);
    const std::uint64_t rseed = random_init_seed(seed, inst);
    const Permutation rnd = random_permutation(inst.n, rseed);

    RunRecord& u = out[2 * i];
    u.instance_id = i;
    u.n = inst.n;
    u.p = inst.density;
    u.init_type = "ul";
    u.init_cost = u.final_cost = objective(inst, ul);
    u.wall_ms_inference = inference_ms;
    u.seed = rseed;

    RunRecord& r = out[2 * i + 1];
    r.instance_id = i;
    r.n = inst.n;
    r.p = inst.density;
    r.init_type = "random";
    r.init_cost = r.final_cost = objective(inst, rnd);
    r.seed = rseed;
  });
  return out;
}

std::vector<RunRecord> search_records(const std::vector<QapInstance>& instances, const ModelCheckpoint* ckpt,
                                      const TsSpec& ts, std::uint64_t seed, ExecPolicy policy) {
  std::vector<RunRecord> out(instances.size());
  for_each_index(instances.size(), policy, [&](std::size_t i) {
    const QapInstance& inst = instances[i];
    RunRecord& r = out[i];
    Permutation init;
    if (ckpt) {
      const auto t0 = std::chrono::steady_clock::now();
      init = predict_assignment(ckpt->params, ckpt->config, inst);
      r.wall_ms_inference = elapsed_ms(t0);
      r.init_type = "ul";
    } else {
      init = random_permutation(inst.n, random_init_seed(seed, inst));
      r.init_type = "random";
    }
    const std::uint64_t sseed = search_seed(seed, inst);
    const TabuConfig cfg =
        TabuConfig::for_size(inst.n, ts.evaluations, ts.neighbourhood_size, ts.max_fails, sseed);
    const SearchResult res = tabu_search(inst, init, cfg);
    r.instance_id = i;
    r.n = inst.n;
    r.p = inst.density;
    r.init_cost = res.init_cost;
    r.final_cost = res.best_cost;
    r.evaluations_used = res.evaluations_used;
    r.wall_ms_search = res.wall_ms;
    r.seed = sseed;
  });
  return out;
}

std::vector<RunRecord> cmd_eval_init(const EvalInitOptions& opt) {
  const ModelCheckpoint ckpt = load_checkpoint(opt.ckpt);
  const InstanceSet data = read_instances(opt.data);
  auto records = eval_init_records(ckpt, data.instances, opt.seed, opt.policy);
  if (opt.csv_out) write_records(records, *opt.csv_out);
  return records;
}

std::vector<RunRecord> cmd_search(const SearchOptions& opt) {
  const InstanceSet data = read_instances(opt.data);
  std::optional<ModelCheckpoint> ckpt;
  if (opt.ckpt) ckpt = load_checkpoint(*opt.ckpt);
  auto records = search_records(data.instances, ckpt ? &*ckpt : nullptr, opt.ts, opt.seed, opt.policy);
  if (opt.csv_out) write_records(records, *opt.csv_out);
  return records;
}

std::string cmd_report(const ReportOptions& opt) {
  std::vector<RunRecord> all;
  for (const auto& path : opt.csvs) {
    auto part = read_records(path);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  const BenchSummary s = summarize(all);
  if (opt.csv_out) write_summary_csv(s, *opt.csv_out);
  return format_summary(s);
}

std::vector<RunRecord> cmd_generalize(const GeneralizeOptions& opt) {
  const ModelCheckpoint ckpt = load_checkpoint(opt.ckpt);
  std::vector<RunRecord> all;
  const auto tag = [&](std::vector<RunRecord>& recs, const std::string& stage) {
    for (auto& r : recs) {
      r.train_n = ckpt.meta.train_n;
      r.train_p = ckpt.meta.train_p;
      r.stage = stage;
    }
    all.insert(all.end(), recs.begin(), recs.end());
  };
  for (const auto& path : opt.data) {
    const InstanceSet data = read_instances(path);
    auto init = eval_init_records(ckpt, data.instances, opt.seed, opt.policy);
    tag(init, "init");
    for (const auto& ts : opt.ts) {
      auto ul = search_records(data.instances, &ckpt, ts, opt.seed, opt.policy);
      auto rnd = search_records(data.instances, nullptr, ts, opt.seed, opt.policy);
      tag(ul, ts.label());
      tag(rnd, ts.label());
    }
  }
  if (opt.csv_out) write_records(all, *opt.csv_out);
  return all;
}

}  // namespace plume
