#include "sempt/selftest.hpp"

#include <cmath>
#include <cstdio>

#include "sempt/inference.hpp"
#include "sempt/kernels.hpp"
#include "sempt/knowledge.hpp"
#include "sempt/metrics.hpp"
#include "sempt/rng.hpp"
#include "sempt/runner.hpp"
#include "sempt/tensor.hpp"
#include "sempt/verify.hpp"
#include "sempt/world.hpp"

namespace sempt {

namespace {

SelfTestResult check(const std::string& name, bool pass, const std::string& detail = "") {
  return SelfTestResult{name, pass, detail};
}

SelfTestResult kernels_match_serial() {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t m = 1 + rng.uniform_int(40);
    const int64_t k = 1 + rng.uniform_int(40);
    const int64_t n = 1 + rng.uniform_int(40);
    std::vector<float> a(static_cast<size_t>(m * k)), b(static_cast<size_t>(k * n));
    rng.fill_normal(a, 1.0);
    rng.fill_normal(b, 1.0);
    std::vector<float> out_par(static_cast<size_t>(m * n)), out_ser(out_par.size());
    kernels::matmul_nn(a.data(), b.data(), out_par.data(), m, k, n, false);
    kernels::matmul_nn_serial(a.data(), b.data(), out_ser.data(), m, k, n, false);
    if (out_par != out_ser)
      return check("kernels: parallel matches serial bitwise", false,
                   "matmul mismatch at trial " + std::to_string(trial));
  }
  return check("kernels: parallel matches serial bitwise", true);
}

SelfTestResult matmul_gradients() {
  Rng rng(3);
  Tape<double> tape;
  std::vector<double> av(12), bv(8);
  rng.fill_normal(av, 1.0);
  rng.fill_normal(bv, 1.0);
  Tensor<double> a = tape.leaf(Shape{3, 4}, av, true);
  Tensor<double> b = tape.leaf(Shape{4, 2}, bv, true);
  Tensor<double> loss = sum_all(tanh_act(matmul(a, b)));
  tape.backward(loss);

  const double eps = 1e-3;
  double max_rel = 0.0;
  auto probe = [&](std::vector<double> base, int which) {
    for (size_t i = 0; i < base.size(); ++i) {
      auto eval = [&](double delta) {
        std::vector<double> pert = base;
        pert[i] += delta;
        Tape<double> t2;
        Tensor<double> pa = t2.leaf(Shape{3, 4}, which == 0 ? pert : av, true);
        Tensor<double> pb = t2.leaf(Shape{4, 2}, which == 1 ? pert : bv, true);
        return sum_all(tanh_act(matmul(pa, pb))).scalar();
      };
      const double fd = (eval(eps) - eval(-eps)) / (2 * eps);
      const double ad = (which == 0 ? a.grad() : b.grad())[i];
      max_rel = std::max(max_rel, grad_rel_err(ad, fd));
    }
  };
  probe(av, 0);
  probe(bv, 1);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "max rel err %.2e", max_rel);
  return check("autodiff: matmul gradients vs finite differences", max_rel < 1e-3, buf);
}

SelfTestResult softmax_invariants() {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t n = 2 + rng.uniform_int(12);
    std::vector<double> x(static_cast<size_t>(n));
    rng.fill_normal(x, 50.0);
    const double tau = 0.01 + rng.uniform();
    Tape<double> tape;
    Tensor<double> y = softmax_last(tape.constant(Shape{n}, x), tau);
    double sum = 0.0;
    for (double v : y.values()) {
      if (v < 0.0) return check("softmax: nonnegative, sums to one", false, "negative output");
      sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-6)
      return check("softmax: nonnegative, sums to one", false,
                   "sum deviates by " + std::to_string(sum - 1.0));
  }
  return check("softmax: nonnegative, sums to one", true);
}

SelfTestResult pipeline_gradients() {
  GradCheckReport report = verify_pipeline_gradients(5);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "max rel err %.2e over %zu parameter groups",
                report.max_rel_err(), report.entries.size());
  return check("pipeline gradients: full loss vs finite differences (64-bit)", report.pass,
               report.failure.empty() ? buf : report.failure);
}

SelfTestResult topk_oracle() {
  Rng rng(23);
  for (int trial = 0; trial < 1000; ++trial) {
    const int64_t s = 2 + rng.uniform_int(12);
    const int64_t k = 1 + rng.uniform_int(s - 1);
    std::vector<double> scores(static_cast<size_t>(s));
    for (auto& v : scores) v = rng.uniform_int(8);  // coarse values force ties
    const std::vector<int64_t> got = select_topk<double>(scores, k);
    // oracle: stable sort by (score desc, index asc)
    std::vector<int64_t> idx(static_cast<size_t>(s));
    for (int64_t i = 0; i < s; ++i) idx[static_cast<size_t>(i)] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
      return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
    });
    idx.resize(static_cast<size_t>(k));
    std::sort(idx.begin(), idx.end());
    if (got != idx)
      return check("top-k selection matches full-sort oracle (1000 cases)", false,
                   "mismatch at trial " + std::to_string(trial));
  }
  return check("top-k selection matches full-sort oracle (1000 cases)", true);
}

SelfTestResult predict_oracle() {
  SyntheticWorldSpec spec;
  spec.latent_attributes = 4;
  spec.attributes_per_category = 2;
  spec.num_seen = 3;
  spec.num_unseen = 2;
  spec.samples_per_category = 2;
  spec.embed_dim = 8;
  spec.descriptions_per_category = 3;
  spec.seed = 9;
  SyntheticWorld world = generate_synthetic_world(spec);
  SplitSpec split = make_split_with_counts(world.dataset, 9, 1, 3);
  CategoryRegistry registry =
      CategoryRegistry::from_split(split.seen_categories, split.unseen_categories);
  EncoderConfig ec;
  ec.embed_dim = spec.embed_dim;
  EmbeddingBank merged(spec.embed_dim);
  for (const auto& key : world.image_bank.keys())
    merged.insert(key, world.image_bank.stored(key));
  for (const auto& key : world.text_bank.keys())
    merged.insert(key, world.text_bank.stored(key));
  SemptModel<float> model =
      SemptModel<float>::build(HyperParams{}, registry, world.descriptions,
                               Backend<float>::precomputed(ec, std::move(merged)), 9);
  InferenceEngine<float> engine = InferenceEngine<float>::from_model(model);

  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<float> v(static_cast<size_t>(spec.embed_dim));
    rng.fill_normal(v, 1.0);
    Prediction pred = engine.predict(v, InferenceMode::kRouted);
    // oracle: linear scan over the returned similarity vector
    int64_t best = 0;
    for (int64_t c = 1; c < registry.size(); ++c)
      if (pred.similarities[static_cast<size_t>(c)] >
          pred.similarities[static_cast<size_t>(best)])
        best = c;
    if (best != pred.category)
      return check("prediction matches linear-scan argmax oracle (1000 cases)", false,
                   "mismatch at trial " + std::to_string(trial));
  }
  return check("prediction matches linear-scan argmax oracle (1000 cases)", true);
}

SelfTestResult metric_fidelity() {
  struct Triple {
    double base, novel, hm;
  };
  const std::vector<Triple> published = {{82.69, 63.22, 71.66}, {87.08, 81.21, 84.04}};
  for (const auto& t : published) {
    const double hm = harmonic_mean(t.base, t.novel);
    if (std::fabs(hm - t.hm) > 0.02)
      return check("metric fidelity: harmonic mean of published triples", false,
                   "expected " + std::to_string(t.hm) + ", got " + std::to_string(hm));
  }
  return check("metric fidelity: harmonic mean of published triples", true);
}

SelfTestResult knowledge_stub() {
  const std::vector<std::string> cats = {"water lily", "petunia", "toad lily"};
  const KnowledgeResult r = stub_generate(7, cats, 8, 4);
  try {
    r.vocabulary.validate();
    r.descriptions.validate();
  } catch (const Error& e) {
    return check("knowledge stub: deterministic and well-formed", false, e.what());
  }
  const KnowledgeResult again = stub_generate(7, cats, 8, 4);
  const bool same = again.descriptions.by_category == r.descriptions.by_category &&
                    again.vocabulary.attributes == r.vocabulary.attributes;
  return check("knowledge stub: deterministic and well-formed", same,
               same ? "" : "repeat run differed");
}

}  // namespace

std::vector<SelfTestResult> run_selftest() {
  std::vector<SelfTestResult> results;
  results.push_back(kernels_match_serial());
  results.push_back(matmul_gradients());
  results.push_back(softmax_invariants());
  results.push_back(topk_oracle());
  results.push_back(predict_oracle());
  results.push_back(metric_fidelity());
  results.push_back(knowledge_stub());
  results.push_back(pipeline_gradients());
  return results;
}

}  // namespace sempt
