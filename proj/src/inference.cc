#include "ddinc/inference.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <thread>

namespace ddinc {

// --- SampleSet -------------------------------------------------------------

void SampleSet::append(const World& w) {
  if (w.size() != num_vars_) throw InputError("sample has the wrong width");
  std::size_t off = bits_.size();
  bits_.resize(off + row_bytes(), 0);
  for (VarId v = 0; v < num_vars_; ++v) {
    if (w[v]) bits_[off + v / 8] |= static_cast<std::uint8_t>(1u << (v % 8));
  }
  ++size_;
}

void SampleSet::append(const SampleSet& other) {
  if (other.num_vars_ != num_vars_) {
    throw InputError("sample sets have different widths");
  }
  bits_.insert(bits_.end(), other.bits_.begin(), other.bits_.end());
  size_ += other.size_;
}

World SampleSet::world(std::size_t i) const {
  World w(num_vars_);
  load(i, w);
  return w;
}

void SampleSet::load(std::size_t i, World& out) const {
  out.resize(num_vars_);
  const std::uint8_t* row = bits_.data() + i * row_bytes();
  for (VarId v = 0; v < num_vars_; ++v) out[v] = (row[v / 8] >> (v % 8)) & 1;
}

namespace {

constexpr char kMagic[8] = {'D', 'D', 'S', 'M', 'P', 'L', '0', '1'};

void put_u64(std::ostream& out, std::uint64_t x) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((x >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw InputError("truncated sample file header");
  }
  std::uint64_t x = 0;
  for (int i = 7; i >= 0; --i) x = (x << 8) | b[i];
  return x;
}

}  // namespace

void SampleSet::write(std::ostream& out) const {
  out.write(kMagic, 8);
  put_u64(out, num_vars_);
  put_u64(out, size_);
  out.write(reinterpret_cast<const char*>(bits_.data()),
            static_cast<std::streamsize>(bits_.size()));
}

SampleSet SampleSet::read(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw InputError("not a sample file");
  }
  SampleSet s(get_u64(in));
  std::uint64_t n = get_u64(in);
  s.bits_.resize(n * s.row_bytes());
  if (!in.read(reinterpret_cast<char*>(s.bits_.data()),
               static_cast<std::streamsize>(s.bits_.size()))) {
    throw InputError("truncated sample file");
  }
  s.size_ = n;
  return s;
}

void SampleSet::write_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  write(out);
}

SampleSet SampleSet::read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return read(in);
}

// --- GibbsChain ------------------------------------------------------------

GibbsChain::GibbsChain(const FactorGraph& graph, std::span<const double> weights)
    : graph_(graph),
      weights_(weights.empty() ? graph.weight_values()
                               : std::vector<double>(weights.begin(),
                                                     weights.end())),
      adjacency_(graph.num_variables()),
      query_(graph.query_variables()) {
  if (weights_.size() != graph.num_weights()) {
    throw InputError("weight vector does not match the graph");
  }
  struct Raw {
    FactorId factor;
    Occurrence occ;
  };
  std::vector<std::vector<Raw>> raw(graph.num_variables());
  std::uint32_t g = 0;
  for (FactorId f = 0; f < graph.num_factors(); ++f) {
    factor_first_grounding_.push_back(g);
    for (const auto& gr : graph.factor(f).groundings) {
      std::map<VarId, std::pair<std::uint16_t, std::uint16_t>> counts;
      for (const auto& l : gr) {
        auto& c = counts[l.var];
        (l.positive ? c.first : c.second)++;
      }
      for (const auto& [v, c] : counts) {
        raw[v].push_back({f, Occurrence{g, c.first, c.second}});
      }
      grounding_factor_.push_back(f);
      ++g;
    }
  }
  factor_first_grounding_.push_back(g);
  for (VarId v = 0; v < graph.num_variables(); ++v) {
    std::size_t k = 0;
    for (FactorId f : graph.adjacent(v)) {
      Adjacent a{f, static_cast<std::uint32_t>(occurrences_.size()), 0};
      while (k < raw[v].size() && raw[v][k].factor == f) {
        occurrences_.push_back(raw[v][k].occ);
        ++k;
      }
      a.end = static_cast<std::uint32_t>(occurrences_.size());
      adjacency_[v].push_back(a);
    }
  }
  reset(initial_world(graph));
}

void GibbsChain::reset(const World& world) {
  world_ = world;
  unsat_.assign(grounding_factor_.size(), 0);
  nsat_.assign(graph_.num_factors(), 0);
  std::uint32_t g = 0;
  for (FactorId f = 0; f < graph_.num_factors(); ++f) {
    for (const auto& gr : graph_.factor(f).groundings) {
      std::uint32_t u = 0;
      for (const auto& l : gr) u += (world_[l.var] != 0) != l.positive;
      unsat_[g] = u;
      nsat_[f] += u == 0;
      ++g;
    }
  }
}

double GibbsChain::conditional(VarId v) {
  const bool cur = world_[v] != 0;
  double w0 = 0.0, w1 = 0.0;
  for (const Adjacent& a : adjacency_[v]) {
    ++fetches_;
    const Factor& f = graph_.factor(a.factor);
    std::int32_t n0 = nsat_[a.factor], n1 = n0;
    for (std::uint32_t i = a.begin; i < a.end; ++i) {
      const Occurrence& o = occurrences_[i];
      std::uint32_t u = unsat_[o.grounding];
      std::uint32_t rest = u - (cur ? o.neg : o.pos);
      int sat = u == 0;
      n0 += (rest + o.pos == 0) - sat;
      n1 += (rest + o.neg == 0) - sat;
    }
    int s0, s1;
    if (f.head && *f.head == v) {
      s0 = -1;
      s1 = 1;
    } else {
      s0 = s1 = (!f.head || world_[*f.head]) ? 1 : -1;
    }
    double w = weights_[f.weight];
    if (n0 > 0) w0 += w * s0 * g_eval(f.semantics, n0);
    if (n1 > 0) w1 += w * s1 * g_eval(f.semantics, n1);
  }
  return sigmoid(w1 - w0);
}

void GibbsChain::set(VarId v, std::uint8_t value) {
  value = value ? 1 : 0;
  if (world_[v] == value) return;
  for (const Adjacent& a : adjacency_[v]) {
    for (std::uint32_t i = a.begin; i < a.end; ++i) {
      const Occurrence& o = occurrences_[i];
      std::uint32_t u = unsat_[o.grounding];
      std::uint32_t nu = value ? u - o.pos + o.neg : u - o.neg + o.pos;
      nsat_[a.factor] += (nu == 0) - (u == 0);
      unsat_[o.grounding] = nu;
    }
  }
  world_[v] = value;
}

void GibbsChain::sweep(Rng& rng) { sweep(rng, query_); }

void GibbsChain::sweep(Rng& rng, std::span<const VarId> vars) {
  for (VarId v : vars) {
    double p = conditional(v);
    set(v, rng.uniform() < p);
  }
}

double gibbs_conditional(const FactorGraph& graph, const World& world,
                         VarId v) {
  World w = world;
  double lw[2] = {0.0, 0.0};
  for (int b = 0; b < 2; ++b) {
    w[v] = static_cast<std::uint8_t>(b);
    for (FactorId f : graph.adjacent(v)) lw[b] += factor_weight(graph, f, w);
  }
  return sigmoid(lw[1] - lw[0]);
}

// --- run_gibbs -------------------------------------------------------------

namespace {

struct ChainOutput {
  std::vector<std::uint64_t> ones;
  std::size_t kept = 0;
  SampleSet samples;
  std::vector<std::vector<std::uint8_t>> traces;
  std::uint64_t fetches = 0;
};

ChainOutput run_chain(const FactorGraph& graph, const GibbsConfig& cfg,
                      std::span<const double> weights, std::size_t index) {
  ChainOutput out;
  out.ones.assign(graph.num_variables(), 0);
  out.samples = SampleSet(graph.num_variables());
  out.traces.resize(cfg.trace_vars.size());
  Rng rng(cfg.seed, index);
  GibbsChain chain(graph, weights);
  World w = initial_world(graph);
  if (cfg.random_init) {
    for (VarId v : graph.query_variables()) w[v] = rng.uniform() < 0.5;
  }
  chain.reset(w);
  const std::size_t thin = cfg.thinning == 0 ? 1 : cfg.thinning;
  for (std::size_t s = 0; s < cfg.sweeps; ++s) {
    chain.sweep(rng);
    if (s < cfg.burn_in || (s - cfg.burn_in) % thin != 0) continue;
    const World& cur = chain.world();
    for (VarId v = 0; v < cur.size(); ++v) out.ones[v] += cur[v];
    ++out.kept;
    if (cfg.record_samples) out.samples.append(cur);
    for (std::size_t k = 0; k < cfg.trace_vars.size(); ++k) {
      out.traces[k].push_back(cur[cfg.trace_vars[k]]);
    }
  }
  out.fetches = chain.factor_fetches();
  return out;
}

}  // namespace

GibbsResult run_gibbs(const FactorGraph& graph, const GibbsConfig& cfg,
                      std::span<const double> weights) {
  if (cfg.sweeps <= cfg.burn_in && cfg.sweeps != 0) {
    throw InputError("sweeps must exceed burn-in");
  }
  const std::size_t chains = std::max<std::size_t>(cfg.chains, 1);
  std::vector<ChainOutput> outs(chains);
  std::size_t threads = cfg.threads == 0 ? chains : cfg.threads;
  threads = std::min(threads, chains);
  if (threads <= 1) {
    for (std::size_t c = 0; c < chains; ++c) {
      outs[c] = run_chain(graph, cfg, weights, c);
    }
  } else {
    for (std::size_t start = 0; start < chains; start += threads) {
      std::vector<std::thread> pool;
      for (std::size_t c = start; c < std::min(chains, start + threads); ++c) {
        pool.emplace_back(
            [&, c] { outs[c] = run_chain(graph, cfg, weights, c); });
      }
      for (auto& t : pool) t.join();
    }
  }

  GibbsResult r;
  r.samples = SampleSet(graph.num_variables());
  r.traces.resize(cfg.trace_vars.size());
  std::vector<std::uint64_t> ones(graph.num_variables(), 0);
  for (auto& o : outs) {
    for (VarId v = 0; v < ones.size(); ++v) ones[v] += o.ones[v];
    r.kept += o.kept;
    r.factor_fetches += o.fetches;
    if (cfg.record_samples) r.samples.append(o.samples);
    for (std::size_t k = 0; k < r.traces.size(); ++k) {
      r.traces[k].insert(r.traces[k].end(), o.traces[k].begin(),
                         o.traces[k].end());
    }
  }
  World init = initial_world(graph);
  r.marginals.resize(graph.num_variables());
  for (VarId v = 0; v < ones.size(); ++v) {
    if (is_evidence(graph.variable(v).role) || r.kept == 0) {
      r.marginals[v] = is_evidence(graph.variable(v).role) ? init[v] : 0.5;
    } else {
      r.marginals[v] = static_cast<double>(ones[v]) / r.kept;
    }
  }
  return r;
}

std::optional<std::size_t> sweeps_to_epsilon(const FactorGraph& graph,
                                             VarId var, double target,
                                             double epsilon,
                                             std::size_t max_sweeps,
                                             std::uint64_t seed,
                                             std::size_t window) {
  if (epsilon >= 1.0) return 1;
  Rng rng(seed, 0);
  GibbsChain chain(graph);
  World w = initial_world(graph);
  for (VarId v : graph.query_variables()) w[v] = rng.uniform() < 0.5;
  chain.reset(w);
  std::uint64_t ones = 0;
  std::optional<std::size_t> entered;
  if (window == 0) window = 1;
  for (std::size_t s = 1; s <= max_sweeps; ++s) {
    chain.sweep(rng);
    ones += chain.world()[var];
    double est = static_cast<double>(ones) / s;
    if (std::abs(est - target) <= epsilon) {
      if (!entered) entered = s;
      if (s - *entered + 1 >= window) return entered;
    } else {
      entered.reset();
    }
  }
  return std::nullopt;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

void write_marginals_csv(std::ostream& out, const FactorGraph& graph,
                         std::span<const double> marginals) {
  out << "var_id,relation,tuple,probability\n";
  char buf[32];
  for (VarId v = 0; v < graph.num_variables(); ++v) {
    const Variable& var = graph.variable(v);
    std::string tuple;
    for (std::size_t i = 0; i < var.tuple.size(); ++i) {
      if (i) tuple += ';';
      tuple += var.tuple[i];
    }
    std::snprintf(buf, sizeof buf, "%.6f", marginals[v]);
    out << v + 1 << ',' << csv_field(var.relation) << ',' << csv_field(tuple)
        << ',' << buf << '\n';
  }
}

}  // namespace ddinc
