// Acceptance checks 1-8. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "nqe/encoder.hpp"
#include "nqe/fuzzy_logic.hpp"
#include "nqe/random.hpp"
#include "nqe/sampler.hpp"
#include "nqe/symbolic_executor.hpp"
#include "nqe/synthetic.hpp"
#include "nqe/trainer.hpp"

using namespace nqe;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. logic axioms

Outcome logic_axioms() {
  const auto t0 = Clock::now();
  const std::size_t d = 16, n = 100000;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto draw = [&] {
    std::vector<double> v(d);
    for (auto& x : v) x = u(rng);
    return FuzzyVec(v);
  };
  const auto one = FuzzyVec::constant(d, 1.0), zero = FuzzyVec::constant(d, 0.0);
  double worst = 0.0;
  std::size_t monotone_violations = 0;
  auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  std::vector<FuzzyVec> pool;
  pool.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pool.push_back(draw());
  for (std::size_t i = 0; i + 2 < n; i += 1) {
    const FuzzyVec &a = pool[i], &b = pool[i + 1], &c = pool[i + 2];
    std::vector<double> hi(d);
    for (std::size_t k = 0; k < d; ++k) hi[k] = std::max(a[k], c[k]);
    const FuzzyVec ah(hi);
    for (LogicKind kind : {LogicKind::product, LogicKind::godel, LogicKind::lukasiewicz}) {
      const FuzzyVec ab[] = {a, b}, ba[] = {b, a}, a1[] = {a, one}, a0[] = {a, zero}, hb[] = {ah, b};
      const auto cab = conj(kind, ab), dab = disj(kind, ab);
      const auto cba = conj(kind, ba), dba = disj(kind, ba);
      const auto ci = conj(kind, a1), di = disj(kind, a0), cz = conj(kind, a0), dz = disj(kind, a1);
      const auto ch = conj(kind, hb), dh = disj(kind, hb);
      const auto nn = neg(neg(a));
      for (std::size_t k = 0; k < d; ++k) {
        track(cab[k], cba[k]);
        track(dab[k], dba[k]);
        track(ci[k], a[k]);
        track(di[k], a[k]);
        track(cz[k], 0.0);
        track(dz[k], 1.0);
        track(nn[k], a[k]);
        if (ch[k] + 1e-12 < cab[k] || dh[k] + 1e-12 < dab[k]) ++monotone_violations;
      }
      if (kind != LogicKind::lukasiewicz) {
        const FuzzyVec nab[] = {neg(a), neg(b)};
        const auto l1 = neg(conj(kind, ab)), r1 = disj(kind, nab);
        const auto l2 = neg(disj(kind, ab)), r2 = conj(kind, nab);
        for (std::size_t k = 0; k < d; ++k) {
          track(l1[k], r1[k]);
          track(l2[k], r2[k]);
        }
      }
    }
  }
  double worst_expansion = 0.0;
  for (std::size_t m = 2; m <= 5; ++m) {
    for (std::size_t i = 0; i + m <= 20000; i += m) {
      std::vector<double> xs(m);
      for (std::size_t j = 0; j < m; ++j) xs[j] = pool[i + j][j % d];
      worst_expansion =
          std::max(worst_expansion, std::abs(disj_scalar(LogicKind::product, xs) - product_disj_expansion(xs)));
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst <= 1e-12 && worst_expansion <= 1e-12 && monotone_violations == 0 && secs < 10.0;
  o.detail = "max axiom err " + fmt("%.2e", worst) + ", expansion err " + fmt("%.2e", worst_expansion) +
             ", monotone violations " + std::to_string(monotone_violations) + ", " + fmt("%.1f", secs) + " s";
  return o;
}

// ---------------------------------------------------------------------------
// 2. symbolic executor vs brute force

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  std::size_t compared = 0, mismatches = 0, missing = 0;
  for (std::uint64_t gi = 0; gi < 100; ++gi) {
    RandomGraphSpec spec;
    spec.entities = 30 + gi % 21;  // 30..50
    spec.relations = 3 + gi % 4;
    spec.facts = 150 + (gi * 37) % 151;  // 150..300
    spec.min_arity = 2;
    spec.max_arity = 5;
    const auto g = random_graph(spec, 1000 + gi);
    for (QueryType t : kAllQueryTypes) {
      std::size_t found = 0;
      // structure only: answers may all lie on the train graph
      for (std::uint64_t s = 0; s < 2000 && found < 5; ++s) {
        const auto q = sample_query(t, g, Split::train, derive_seed(gi, {static_cast<std::uint64_t>(t), s}),
                                    {16, 100000, false, false});
        if (!q) continue;
        ++found;
        for (SplitSet scope : {SplitSet{Split::train}, SplitSet::all()}) {
          ++compared;
          if (execute(q->ast, g, scope) != brute_force_execute(q->ast, g, scope)) ++mismatches;
        }
      }
      missing += 5 - found;
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = mismatches == 0 && missing == 0 && secs < 120.0;
  o.detail = std::to_string(compared) + " comparisons, " + std::to_string(mismatches) + " mismatches, " +
             std::to_string(missing) + " unsampled instances, " + fmt("%.1f", secs) + " s";
  return o;
}

// ---------------------------------------------------------------------------
// 3. sampler soundness and determinism

Outcome sampler_soundness() {
  std::vector<std::pair<std::string, HyperGraph>> graphs;
  graphs.emplace_back("random", random_graph({}, 5));
  graphs.emplace_back("clustered", clustered_graph({}, 42));
  DatasetCounts counts;
  for (QueryType t : kAllQueryTypes) {
    counts[{Split::train, t}] = 10;
    counts[{Split::valid, t}] = 10;
    counts[{Split::test, t}] = 10;
  }
  std::size_t checked = 0, unsound = 0, empty_hard = 0, byte_diffs = 0, shortfall = 0;
  const auto root = fs::temp_directory_path() / ("nqe_accept_" + std::to_string(std::random_device{}()));
  for (const auto& [name, g] : graphs) {
    const auto a = root / (name + "_a"), b = root / (name + "_b");
    const auto ma = generate_dataset(g, counts, 7, a, 1);
    generate_dataset(g, counts, 7, b, 1);
    for (const auto& entry : fs::directory_iterator(a)) {
      std::ifstream fa(entry.path(), std::ios::binary), fb(b / entry.path().filename(), std::ios::binary);
      std::stringstream sa, sb;
      sa << fa.rdbuf();
      sb << fb.rdbuf();
      if (sa.str() != sb.str()) ++byte_diffs;
    }
    for (const auto& [key, n] : ma.requested) shortfall += n - ma.written.at(key);
    for (const auto& q : load_dataset(a, g).queries) {
      ++checked;
      const auto easy = execute(q.ast, g, {Split::train});
      const auto hard = set_difference(execute(q.ast, g, SplitSet::up_to(q.split)), easy);
      if (easy != q.easy || hard != q.hard) ++unsound;
      if (q.split != Split::train && q.hard.empty()) ++empty_hard;
    }
  }
  fs::remove_all(root);
  Outcome o;
  o.pass = checked > 0 && unsound == 0 && empty_hard == 0 && byte_diffs == 0;
  o.detail = std::to_string(checked) + " queries re-executed, " + std::to_string(unsound) + " unsound, " +
             std::to_string(empty_hard) + " empty hard sets, " + std::to_string(byte_diffs) +
             " differing files, shortfall " + std::to_string(shortfall);
  return o;
}

// ---------------------------------------------------------------------------
// 4. encoder correctness

struct GradFixture {
  HyperGraph g;
  std::vector<StepProgram> programs;
  std::vector<TrainingExample> examples;
};

GradFixture grad_fixture() {
  GradFixture f;
  RandomGraphSpec spec;
  spec.entities = 20;
  spec.relations = 4;
  spec.facts = 120;
  f.g = random_graph(spec, 7);
  for (QueryType t : {QueryType::p1, QueryType::i2, QueryType::pni, QueryType::cp2, QueryType::u2}) {
    for (std::uint64_t s = 0; s < 50; ++s) {
      if (auto q = sample_query(t, f.g, Split::test, s)) {
        f.programs.push_back(compile(q->ast));
        f.examples.push_back({static_cast<std::uint32_t>(f.programs.size() - 1), set_union(q->easy, q->hard)[0]});
        break;
      }
    }
  }
  return f;
}

Outcome encoder_correctness() {
  const auto t0 = Clock::now();
  EncoderConfig c;
  c.dim = 16;
  c.ffn_dim = 32;
  c.heads = 2;
  c.layers = 2;
  c.init_scale = 0.5;
  const auto p = ModelParams::init(c, 30, 8, 11);
  std::mt19937_64 rng(3);
  double worst_row = 0.0, worst_perm = 0.0;
  std::size_t out_of_range = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 4;
    EncoderInput in;
    for (std::size_t k = 0; k + 1 < n; ++k) in.relations.push_back(RelationId{static_cast<std::uint32_t>(rng() % 8)});
    const std::size_t mask = rng() % n;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == mask) {
        in.entities.emplace_back(MaskToken{});
      } else {
        in.entities.emplace_back(EntityId{static_cast<std::uint32_t>(rng() % 30)});
      }
    }
    AttentionProbe probe;
    const auto out = project(p, in, {}, &probe);
    for (const auto& layer : probe.layers) {
      for (std::size_t row = 0; row * probe.seq_len < layer.size(); ++row) {
        double s = 0.0;
        for (std::size_t j = 0; j < probe.seq_len; ++j) s += layer[row * probe.seq_len + j];
        worst_row = std::max(worst_row, std::abs(s - 1.0));
      }
    }
    for (double v : out.values()) out_of_range += (v > 0.0 && v < 1.0) ? 0 : 1;
    if (n >= 4) {
      // reverse the qualifier pairs
      EncoderInput perm = in;
      const std::size_t q = n - 2;
      for (std::size_t k = 0; k < q; ++k) {
        perm.entities[2 + k] = in.entities[2 + (q - 1 - k)];
        perm.relations[1 + k] = in.relations[1 + (q - 1 - k)];
      }
      const auto po = project(p, perm);
      for (std::size_t k = 0; k < out.size(); ++k) worst_perm = std::max(worst_perm, std::abs(po[k] - out[k]));
    }
  }

  const auto f = grad_fixture();
  EncoderConfig gc;
  gc.dim = 8;
  gc.ffn_dim = 16;
  auto gp = ModelParams::init(gc, f.g.num_entities(), f.g.num_relations(), 3);
  GradientOptions o;
  const auto grads = gradients(gp, f.programs, f.examples, o);
  double worst_rel = 0.0;
  std::size_t probes = 0;
  for (int k = 0; k < 600; ++k) {
    const std::size_t ti = rng() % gp.tensors.size();
    auto& m = gp.tensors[ti].value;
    if (m.size() == 0) continue;
    const std::size_t e = rng() % static_cast<std::size_t>(m.size());
    const double orig = m.data()[e], h = 1e-4;
    m.data()[e] = orig + h;
    const double lp = mean_loss(gp, f.programs, f.examples, o);
    m.data()[e] = orig - h;
    const double lm = mean_loss(gp, f.programs, f.examples, o);
    m.data()[e] = orig;
    const double fd = (lp - lm) / (2 * h), an = grads.tensors[ti].data()[e];
    worst_rel = std::max(worst_rel, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
    ++probes;
  }
  const double secs = seconds_since(t0);
  Outcome out;
  out.pass = worst_row <= 1e-6 && out_of_range == 0 && worst_perm <= 1e-6 && worst_rel <= 1e-4 && probes >= 500 &&
             f.programs.size() >= 4 && secs < 60.0;
  out.detail = "row-sum err " + fmt("%.1e", worst_row) + ", outputs outside (0,1) " + std::to_string(out_of_range) +
               ", permutation err " + fmt("%.1e", worst_perm) + ", grad rel err " + fmt("%.2e", worst_rel) + " over " +
               std::to_string(probes) + " probes, " + fmt("%.1f", secs) + " s";
  return out;
}

// ---------------------------------------------------------------------------
// 5. batching equivalence

Outcome batching_equivalence() {
  RandomGraphSpec spec;
  spec.entities = 30;
  const auto g = random_graph(spec, 21);
  std::vector<StepProgram> mixed;
  for (QueryType t : {QueryType::p1, QueryType::i2, QueryType::pni, QueryType::cp2}) {
    std::size_t got = 0;
    for (std::uint64_t s = 0; s < 200 && got < 3; ++s) {
      if (auto q = sample_query(t, g, Split::test, s)) {
        mixed.push_back(compile(q->ast));
        ++got;
      }
    }
  }
  EncoderConfig c;
  c.dim = 16;
  c.ffn_dim = 32;
  c.heads = 2;
  c.layers = 2;
  const auto p = ModelParams::init(c, g.num_entities(), g.num_relations(), 4);
  const auto batched = run_step_program(p, mixed);
  double worst_fwd = 0.0;
  for (std::size_t q = 0; q < mixed.size(); ++q) {
    const auto one = run_step_program(p, std::span(&mixed[q], 1));
    for (std::size_t k = 0; k < c.dim; ++k) worst_fwd = std::max(worst_fwd, std::abs(batched.targets[q][k] - one.targets[0][k]));
  }

  double worst_grad = 0.0;
  for (QueryType t : {QueryType::p1, QueryType::i2, QueryType::pni, QueryType::cp2}) {
    std::vector<StepProgram> progs;
    std::vector<TrainingExample> ex;
    for (std::uint64_t s = 0; s < 200 && progs.size() < 6; ++s) {
      if (auto q = sample_query(t, g, Split::test, 500 + s)) {
        progs.push_back(compile(q->ast));
        for (auto a : set_union(q->easy, q->hard)) ex.push_back({static_cast<std::uint32_t>(progs.size() - 1), a});
      }
    }
    GradientOptions batched_opts, serial_opts;
    serial_opts.execution.ablations.unparalleled = true;
    const auto a = gradients(p, progs, ex, batched_opts), b = gradients(p, progs, ex, serial_opts);
    worst_grad = std::max(worst_grad, std::abs(a.loss - b.loss));
    for (std::size_t i = 0; i < a.tensors.size(); ++i) {
      if (a.tensors[i].size() > 0) worst_grad = std::max(worst_grad, (a.tensors[i] - b.tensors[i]).cwiseAbs().maxCoeff());
    }
  }
  Outcome o;
  o.pass = mixed.size() == 12 && worst_fwd <= 1e-6 && worst_grad <= 1e-9;
  o.detail = std::to_string(mixed.size()) + " mixed programs, forward err " + fmt("%.1e", worst_fwd) +
             ", unparalleled grad err " + fmt("%.1e", worst_grad);
  return o;
}

// ---------------------------------------------------------------------------
// 6. metric harness

Outcome metric_harness() {
  bool ok = true;
  std::vector<std::string> failures;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      failures.push_back(what);
    }
  };
  // ranks 1, 2, 4
  const std::vector<double> s{0.9, 0.8, 0.7, 0.6};
  double mrr = 0.0;
  for (std::uint32_t target : {0u, 1u, 3u}) {
    GroundedQuery q;
    q.hard = {EntityId{target}};
    mrr += query_metrics(s, q).mrr;
  }
  mrr /= 3.0;
  expect(std::abs(mrr - 7.0 / 12.0) < 1e-15, "mrr");
  const std::vector<double> sc{0.9, 0.8, 0.7, 0.6, 0.5};
  expect(rank_filtered(sc, EntityId{3}, {EntityId{3}}) == 4.0, "raw rank");
  expect(rank_filtered(sc, EntityId{3}, {EntityId{0}, EntityId{2}, EntityId{3}}) == 2.0, "filtered rank");
  expect(rank_filtered(sc, EntityId{4}, {EntityId{0}, EntityId{1}, EntityId{2}, EntityId{3}, EntityId{4}}) == 1.0,
         "all filtered");
  const std::vector<double> ties{0.5, 0.5, 0.5, 0.1};
  expect(rank_filtered(ties, EntityId{1}, {EntityId{1}}) == 2.0, "ties");
  expect(rank_filtered(ties, EntityId{1}, {EntityId{0}, EntityId{1}}) == 1.5, "filtered ties");

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  std::size_t increases = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 2 + rng() % 50;
    std::vector<double> scores(n);
    for (auto& x : scores) x = std::round(u(rng) * 10) / 10;
    const EntityId c{static_cast<std::uint32_t>(rng() % n)};
    AnswerSet known{c};
    const double raw = rank_filtered(scores, c, known);
    for (std::uint32_t e = 0; e < n; ++e) {
      if (e != c.value && rng() % 4 == 0) known.push_back(EntityId{e});
    }
    std::sort(known.begin(), known.end());
    if (rank_filtered(scores, c, known) > raw) ++increases;
  }
  expect(increases == 0, "monotone");
  Outcome o;
  o.pass = ok;
  o.detail = "MRR[1,2,4] = " + fmt("%.10f", mrr) + ", rank increases after filtering " + std::to_string(increases);
  for (const auto& f : failures) o.detail += ", failed: " + f;
  return o;
}

// ---------------------------------------------------------------------------
// 7. desk-scale learning

// Expected filtered MRR of a uniformly random ranking.
double random_mrr(std::span<const GroundedQuery> qs, std::size_t num_entities) {
  double total = 0.0;
  for (const auto& q : qs) {
    const std::size_t known = set_union(q.easy, q.hard).size();
    const std::size_t n = num_entities - known + 1;
    double h = 0.0;
    for (std::size_t k = 1; k <= n; ++k) h += 1.0 / static_cast<double>(k);
    total += h / static_cast<double>(n);
  }
  return total / static_cast<double>(qs.size());
}

Outcome desk_scale_learning() {
  const auto t0 = Clock::now();
  const auto g = clustered_graph({}, 42);
  std::size_t qualified = 0;
  for (const auto& f : g.facts()) qualified += f.arity() > 2 ? 1 : 0;
  const double qual_frac = static_cast<double>(qualified) / static_cast<double>(g.facts().size());

  std::vector<GroundedQuery> train_1p;
  std::set<std::string> seen;
  for (std::uint64_t s = 0; s < 6000; ++s) {
    auto q = sample_query(QueryType::p1, g, Split::train, derive_seed(42, {s}));
    if (!q) continue;
    if (seen.insert(serialize(q->ast, vocabulary(g))).second) train_1p.push_back(std::move(*q));
  }
  std::vector<GroundedQuery> test_2i, test_2u;
  for (std::uint64_t s = 0; test_2i.size() < 100 && s < 5000; ++s) {
    if (auto q = sample_query(QueryType::i2, g, Split::test, derive_seed(43, {s}))) test_2i.push_back(*q);
  }
  for (std::uint64_t s = 0; test_2u.size() < 100 && s < 5000; ++s) {
    if (auto q = sample_query(QueryType::u2, g, Split::test, derive_seed(44, {s}))) test_2u.push_back(*q);
  }

  TrainConfig c;
  c.encoder.dim = 32;
  c.encoder.ffn_dim = 64;
  c.encoder.layers = 1;
  c.encoder.heads = 1;
  c.learning_rate = 0.005;
  c.batch_size = 128;
  c.epochs = 100;
  c.epsilon = 0.1;
  c.seed = 42;
  c.train_types = {QueryType::p1};
  const auto result = train(g, train_1p, c);
  const double train_secs = seconds_since(t0);

  const auto scorer = model_scorer(result.checkpoint);
  const auto train_report = evaluate(train_1p, scorer, 128, &g);
  const auto train_only = evaluate(train_1p, scorer);
  const auto r2i = evaluate(test_2i, scorer, 128, &g);
  const auto r2u = evaluate(test_2u, scorer, 128, &g);
  const double hits1 = train_report.per_type.at(QueryType::p1).metrics.hits1;
  const double mrr_2i = r2i.per_type.at(QueryType::i2).metrics.mrr;
  const double mrr_2u = r2u.per_type.at(QueryType::u2).metrics.mrr;
  const double rand_2i = random_mrr(test_2i, g.num_entities()), rand_2u = random_mrr(test_2u, g.num_entities());
  const double secs = seconds_since(t0);

  Outcome o;
  o.pass = qual_frac >= 0.3 && g.num_entities() <= 200 && hits1 >= 0.9 && mrr_2i >= 10 * rand_2i &&
           mrr_2u >= 10 * rand_2u && secs <= 1800.0;
  o.detail = std::to_string(g.facts().size()) + " facts (" + fmt("%.0f%%", 100 * qual_frac) + " qualified), " +
             std::to_string(train_1p.size()) + " train 1p queries; train 1p Hits@1 " + fmt("%.3f", hits1) +
             " (train-split filter only: " + fmt("%.3f", train_only.per_type.at(QueryType::p1).metrics.hits1) +
             "); 2i MRR " + fmt("%.3f", mrr_2i) + " vs random " + fmt("%.4f", rand_2i) + "; 2u MRR " +
             fmt("%.3f", mrr_2u) + " vs random " + fmt("%.4f", rand_2u) + "; final loss " +
             fmt("%.3f", result.epoch_loss.back()) + "; train " + fmt("%.0f", train_secs) + " s, total " +
             fmt("%.0f", secs) + " s";
  return o;
}

// ---------------------------------------------------------------------------
// 8. ablation liveness

Outcome ablation_liveness() {
  RandomGraphSpec spec;
  spec.entities = 30;
  const auto g = random_graph(spec, 31);
  std::vector<StepProgram> progs;
  for (QueryType t : {QueryType::p1, QueryType::i2, QueryType::u2, QueryType::cp2, QueryType::pni}) {
    for (std::uint64_t s = 0; s < 100; ++s) {
      if (auto q = sample_query(t, g, Split::test, s)) {
        progs.push_back(compile(q->ast));
        break;
      }
    }
  }
  EncoderConfig c;
  c.dim = 16;
  c.ffn_dim = 32;
  const auto p = ModelParams::init(c, g.num_entities(), g.num_relations(), 8);
  const auto full = run_step_program(p, progs);
  auto diff = [&](const Ablations& ab) {
    const auto out = run_step_program(p, progs, {LogicKind::product, ab});
    double m = 0.0;
    for (std::size_t q = 0; q < progs.size(); ++q)
      for (std::size_t k = 0; k < c.dim; ++k) m = std::max(m, std::abs(out.targets[q][k] - full.targets[q][k]));
    return m;
  };
  const double dn = diff({.node_h_only = true}), de = diff({.edge_h_only = true}), dl = diff({.logic_blind = true});
  Outcome o;
  o.pass = dn > 1e-6 && de > 1e-6 && dl > 1e-6;
  o.detail = "max abs diff NodeH-only " + fmt("%.3e", dn) + ", EdgeH-only " + fmt("%.3e", de) + ", Logic-blind " +
             fmt("%.3e", dl);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"logic axioms", logic_axioms},
      {"oracle equivalence", oracle_equivalence},
      {"sampler soundness", sampler_soundness},
      {"encoder correctness", encoder_correctness},
      {"batching equivalence", batching_equivalence},
      {"metric harness", metric_harness},
      {"desk-scale learning", desk_scale_learning},
      {"ablation liveness", ablation_liveness},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first << ": " << o.detail << std::endl;
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
