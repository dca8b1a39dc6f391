#include "coldrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "coldrec/errors.hpp"

namespace coldrec {

double ndcg_at_k(std::span<const Index> ranked,
                 const std::vector<Index>& relevant, Index k) {
  if (relevant.empty()) throw DataError("empty relevant set");
  if (k < 1) throw ConfigError("k must be >= 1");
  std::unordered_set<Index> rel(relevant.begin(), relevant.end());
  double dcg = 0.0;
  const std::size_t take = std::min<std::size_t>(k, ranked.size());
  for (std::size_t r = 0; r < take; ++r) {
    if (rel.count(ranked[r])) dcg += 1.0 / std::log2(double(r) + 2.0);
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min<std::size_t>(k, rel.size());
  for (std::size_t r = 0; r < ideal; ++r) {
    idcg += 1.0 / std::log2(double(r) + 2.0);
  }
  return dcg / idcg;
}

double recall_at_k(std::span<const Index> ranked,
                   const std::vector<Index>& relevant, Index k) {
  if (relevant.empty()) throw DataError("empty relevant set");
  if (k < 1) throw ConfigError("k must be >= 1");
  std::unordered_set<Index> rel(relevant.begin(), relevant.end());
  std::size_t hits = 0;
  const std::size_t take = std::min<std::size_t>(k, ranked.size());
  for (std::size_t r = 0; r < take; ++r) {
    if (rel.count(ranked[r])) ++hits;
  }
  return double(hits) / double(rel.size());
}

double mdg_at_k(std::span<const Index> target_user_ranks, Index k) {
  if (target_user_ranks.empty()) throw DataError("item has no target users");
  double sum = 0.0;
  for (Index rank : target_user_ranks) {
    if (rank >= 1 && rank <= k) sum += 1.0 / std::log2(1.0 + double(rank));
  }
  return sum / double(target_user_ranks.size());
}

MdgAggregates mdg_aggregates(const ItemMdgTable& table) {
  if (table.empty()) throw DataError("empty MDG table");
  ItemMdgTable sorted = table;
  std::sort(sorted.begin(), sorted.end(),
            [](const ItemMdg& a, const ItemMdg& b) {
              if (a.mdg != b.mdg) return a.mdg < b.mdg;
              return a.item < b.item;
            });
  const std::size_t n = sorted.size();
  const std::size_t n80 = (4 * n + 4) / 5;   // ceil(0.8 n)
  const std::size_t n5 = (n + 19) / 20;      // ceil(0.05 n)
  auto mean_range = [&sorted](std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += sorted[i].mdg;
    return s / double(end - begin);
  };
  return {mean_range(0, n80), mean_range(n - n5, n), mean_range(0, n)};
}

double gini_diversity(std::span<const Index> counts) {
  if (counts.empty()) throw DataError("empty count vector");
  std::vector<double> sorted(counts.begin(), counts.end());
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (double c : sorted) total += c;
  if (total <= 0.0) throw DataError("all prediction counts are zero");
  const double n = double(sorted.size());
  double weighted = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    weighted += (2.0 * double(i + 1) - n - 1.0) * sorted[i];
  }
  return 1.0 - weighted / (n * total);
}

// Continued-fraction evaluation of the regularized incomplete beta (Lentz).
static double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-14;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double reg_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                          std::lgamma(b) + a * std::log(x) +
                          b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_cf(a, b, x) / a;
  }
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

WelchResult welch_t_test(std::span<const double> sample_a,
                         std::span<const double> sample_b) {
  const std::size_t na = sample_a.size(), nb = sample_b.size();
  if (na < 2 || nb < 2) throw DataError("welch_t_test: sample too small");
  auto mean_of = [](std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
  };
  auto var_of = [](std::span<const double> v, double m) {
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / double(v.size() - 1);
  };
  const double ma = mean_of(sample_a), mb = mean_of(sample_b);
  const double va = var_of(sample_a, ma), vb = var_of(sample_b, mb);
  WelchResult res;
  if (va == 0.0 && vb == 0.0) {
    res.degenerate = true;
    if (ma == mb) {
      res.t = 0.0;
      res.p = 1.0;
    } else {
      res.t = ma > mb ? std::numeric_limits<double>::infinity()
                      : -std::numeric_limits<double>::infinity();
      res.p = 0.0;
    }
    return res;
  }
  const double ga = va / double(na), gb = vb / double(nb);
  res.t = (ma - mb) / std::sqrt(ga + gb);
  res.df = (ga + gb) * (ga + gb) /
           (ga * ga / double(na - 1) + gb * gb / double(nb - 1));
  res.p = reg_incomplete_beta(res.df / 2.0, 0.5,
                              res.df / (res.df + res.t * res.t));
  return res;
}

static std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

std::string report_json(const MetricReport& report) {
  std::ostringstream out;
  char buf[64];
  out << "{\"model\":\"" << json_escape(report.model) << "\",";
  std::snprintf(buf, sizeof(buf), "%g", report.alpha);
  out << "\"alpha\":" << buf << ",\"k\":" << report.k
      << ",\"seed\":" << report.seed
      << ",\"evaluated_users\":" << report.evaluated_users
      << ",\"evaluated_items\":" << report.evaluated_items << ",\"values\":{";
  bool first = true;
  for (const auto& [name, value] : report.values) {
    std::snprintf(buf, sizeof(buf), "%.9g", value);
    out << (first ? "" : ",") << "\"" << json_escape(name) << "\":" << buf;
    first = false;
  }
  out << "}}";
  return out.str();
}

static const char* kMetricOrder[] = {"ndcg",     "recall",  "mdg_min80",
                                     "mdg_max5", "mdg_all", "gini_div"};

std::string report_csv_header() {
  std::string h = "model,alpha,k,seed,evaluated_users,evaluated_items";
  for (const char* m : kMetricOrder) {
    h += ",";
    h += m;
  }
  return h;
}

std::string report_csv_row(const MetricReport& report) {
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", report.alpha);
  out << report.model << ',' << buf << ',' << report.k << ',' << report.seed
      << ',' << report.evaluated_users << ',' << report.evaluated_items;
  for (const char* m : kMetricOrder) {
    const auto it = report.values.find(m);
    if (it == report.values.end()) {
      out << ',';
      continue;
    }
    std::snprintf(buf, sizeof(buf), "%.6f", it->second);
    out << ',' << buf;
  }
  return out.str();
}

void write_mdg_csv(const std::string& path, const ItemMdgTable& table,
                   const std::vector<std::string>& item_labels) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "item_id,num_target_users,mdg\n";
  char buf[32];
  for (const ItemMdg& row : table) {
    std::snprintf(buf, sizeof(buf), "%.6f", row.mdg);
    if (item_labels.empty()) {
      out << row.item;
    } else {
      out << item_labels[row.item];
    }
    out << ',' << row.num_target_users << ',' << buf << '\n';
  }
}

}  // namespace coldrec
