#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "dslrec/runner.hpp"

namespace dslrec {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

double num(const std::string& s) { return std::stod(s); }
std::size_t count(const std::string& s) { return static_cast<std::size_t>(std::stoull(s)); }

Bucket parse_bucket(const std::string& s) {
  for (Bucket b : {Bucket::All, Bucket::Head, Bucket::Tail}) {
    if (to_string(b) == s) return b;
  }
  throw Error("unknown bucket '" + s + "'");
}

void metrics_header(std::ostream& out) {
  out << "run_id,split,bucket,metric,k,value,users_evaluated,seed\n";
}

void metrics_rows(std::ostream& out, const RunRecord& r) {
  for (const auto& m : r.metrics) {
    for (const auto& [name, value] :
         {std::pair{"recall", m.recall_at_k}, std::pair{"ndcg", m.ndcg_at_k}}) {
      out << r.run_id << ',' << to_string(m.split_kind) << ',' << to_string(m.bucket) << ','
          << name << ',' << m.k << ',' << format_double(value) << ',' << m.users_evaluated << ','
          << r.config.seed << '\n';
    }
  }
}

void epoch_header(std::ostream& out) { out << "run_id,epoch,train_loss,validation_ndcg\n"; }

void epoch_rows(std::ostream& out, const RunRecord& r) {
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) {
    out << r.run_id << ',' << e + 1 << ',' << format_double(r.epoch_loss[e]) << ',';
    if (e < r.validation_ndcg.size()) out << format_double(r.validation_ndcg[e]);
    out << '\n';
  }
}

}  // namespace

void write_run(const RunRecord& record, const std::filesystem::path& dir,
               const DatasetSplits* splits) {
  std::filesystem::create_directories(dir);
  save_config_file(record.config, dir / "config.cfg");
  {
    auto out = open_out(dir / "metrics.csv");
    metrics_header(out);
    metrics_rows(out, record);
  }
  {
    auto out = open_out(dir / "epoch_loss.csv");
    epoch_header(out);
    epoch_rows(out, record);
  }
  {
    auto out = open_out(dir / "batch_loss.csv");
    out << "batch,loss\n";
    for (std::size_t b = 0; b < record.batch_loss.size(); ++b) {
      out << b << ',' << format_double(record.batch_loss[b]) << '\n';
    }
  }
  {
    auto out = open_out(dir / "diagnostics.csv");
    out << "batch,loss,kappa_mean,kappa_max,c_mean,c_min,c_max,tau_min,tau_max\n";
    for (const auto& d : record.diagnostics) {
      const auto& s = d.summary;
      out << d.batch;
      for (double v : {s.loss, s.kappa_mean, s.kappa_max, s.c_mean, s.c_min, s.c_max, s.tau_min,
                       s.tau_max}) {
        out << ',' << format_double(v);
      }
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "summary.csv");
    out << "run_id,best_epoch,epochs_run\n"
        << record.run_id << ',' << record.best_epoch << ',' << record.epoch_loss.size() << '\n';
  }
  save_checkpoint(record.model, dir / "checkpoint.bin");
  if (splits && record.config.write_manifest) {
    write_split_manifest(*splits, dir / "split_manifest.tsv");
  }
}

RunRecord load_run(const std::filesystem::path& dir) {
  RunRecord r;
  r.config = load_config_file(dir / "config.cfg");
  const auto summary = read_csv(dir / "summary.csv");
  if (summary.empty() || summary.front().size() < 2) throw Error("malformed summary in " + dir.string());
  r.run_id = summary.front()[0];
  r.best_epoch = count(summary.front()[1]);

  for (const auto& row : read_csv(dir / "epoch_loss.csv")) {
    if (row.size() < 3) throw Error("malformed epoch_loss.csv in " + dir.string());
    r.epoch_loss.push_back(num(row[2]));
    if (row.size() > 3 && !row[3].empty()) r.validation_ndcg.push_back(num(row[3]));
  }
  for (const auto& row : read_csv(dir / "batch_loss.csv")) r.batch_loss.push_back(num(row.at(1)));

  std::map<std::pair<std::string, std::string>, MetricsReport> by_bucket;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& row : read_csv(dir / "metrics.csv")) {
    if (row.size() < 8) throw Error("malformed metrics.csv in " + dir.string());
    const auto key = std::pair{row[1], row[2]};
    auto [it, fresh] = by_bucket.try_emplace(key);
    if (fresh) order.push_back(key);
    auto& m = it->second;
    m.split_kind = parse_split_kind(row[1]);
    m.bucket = parse_bucket(row[2]);
    m.k = count(row[4]);
    m.users_evaluated = count(row[6]);
    if (row[3] == "recall") m.recall_at_k = num(row[5]);
    else m.ndcg_at_k = num(row[5]);
  }
  for (const auto& key : order) r.metrics.push_back(by_bucket[key]);

  for (const auto& row : read_csv(dir / "diagnostics.csv")) {
    if (row.size() < 9) throw Error("malformed diagnostics.csv in " + dir.string());
    DiagnosticsRow d;
    d.batch = count(row[0]);
    d.summary = {num(row[1]), num(row[2]), num(row[3]), num(row[4]),
                 num(row[5]), num(row[6]), num(row[7]), num(row[8])};
    r.diagnostics.push_back(d);
  }
  if (std::filesystem::exists(dir / "checkpoint.bin")) r.model = load_checkpoint(dir / "checkpoint.bin");
  return r;
}

std::vector<Improvement> improvements(const std::vector<RunRecord>& records) {
  struct Sum {
    double total = 0.0;
    std::size_t n = 0;
  };
  // (backbone, split, metric, bucket, loss) -> seed average
  using Key = std::tuple<std::string, SplitKind, std::string, Bucket>;
  std::map<Key, std::pair<Sum, Sum>> acc;
  for (const auto& r : records) {
    const bool sl = r.config.loss == LossKind::SL;
    const bool dsl = r.config.loss == LossKind::DSL;
    if (!sl && !dsl) continue;
    for (const auto& m : r.metrics) {
      for (const auto& [name, value] :
           {std::pair{"recall", m.recall_at_k}, std::pair{"ndcg", m.ndcg_at_k}}) {
        auto& slot = acc[Key{r.config.backbone.name(), m.split_kind, name, m.bucket}];
        Sum& s = sl ? slot.first : slot.second;
        s.total += value;
        ++s.n;
      }
    }
  }
  std::vector<Improvement> out;
  for (const auto& [key, sums] : acc) {
    if (sums.first.n == 0 || sums.second.n == 0) continue;
    Improvement imp;
    std::tie(imp.backbone, imp.split, imp.metric, imp.bucket) = key;
    imp.sl = sums.first.total / static_cast<double>(sums.first.n);
    imp.dsl = sums.second.total / static_cast<double>(sums.second.n);
    imp.percent = imp.sl > 0.0 ? 100.0 * (imp.dsl - imp.sl) / imp.sl : 0.0;
    out.push_back(imp);
  }
  return out;
}

void report(const std::vector<RunRecord>& records, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "metrics.csv");
    metrics_header(out);
    for (const auto& r : records) metrics_rows(out, r);
  }
  {
    auto out = open_out(dir / "epoch_loss.csv");
    epoch_header(out);
    for (const auto& r : records) epoch_rows(out, r);
  }
  {
    auto out = open_out(dir / "improvement.csv");
    out << "backbone,split,metric,bucket,sl,dsl,improvement_pct\n";
    for (const auto& imp : improvements(records)) {
      out << imp.backbone << ',' << to_string(imp.split) << ',' << imp.metric << ','
          << to_string(imp.bucket) << ',' << format_double(imp.sl) << ','
          << format_double(imp.dsl) << ',' << format_double(imp.percent) << '\n';
    }
  }
}

}  // namespace dslrec
