#include "sempt/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "sempt/enhancement.hpp"
#include "sempt/errors.hpp"
#include "sempt/hashing.hpp"
#include "sempt/rng.hpp"
#include "sempt/strings.hpp"

namespace sempt {

namespace {

// World attribute names come from the same pool the offline knowledge stub
// uses, in fixed order.
std::vector<std::string> attribute_names(int64_t count) {
  const auto& pool = builtin_attribute_pool();
  std::vector<std::string> names;
  for (int64_t i = 0; static_cast<int64_t>(names.size()) < count; ++i) {
    if (i < static_cast<int64_t>(pool.size()))
      names.push_back(pool[static_cast<size_t>(i)]);
    else
      names.push_back(pool[static_cast<size_t>(i % pool.size())] + " grade " +
                      std::to_string(i / static_cast<int64_t>(pool.size()) + 1));
  }
  return names;
}

std::vector<double> normalized(std::vector<double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm == 0.0) throw DegenerateInputError("zero vector in world generation");
  for (double& x : v) x /= norm;
  return v;
}

std::vector<float> to_float(const std::vector<double>& v) {
  return std::vector<float>(v.begin(), v.end());
}

// All non-empty subsets of {0..n-1}, ordered by size then lexicographically.
std::vector<std::vector<int64_t>> enumerate_subsets(int64_t n) {
  std::vector<std::vector<int64_t>> subsets;
  for (int64_t mask = 1; mask < (int64_t(1) << n); ++mask) {
    std::vector<int64_t> s;
    for (int64_t b = 0; b < n; ++b)
      if (mask & (int64_t(1) << b)) s.push_back(b);
    subsets.push_back(std::move(s));
  }
  std::stable_sort(subsets.begin(), subsets.end(),
                   [](const auto& a, const auto& b) { return a.size() < b.size(); });
  return subsets;
}

}  // namespace

void SyntheticWorldSpec::validate() const {
  if (embed_dim < 2) throw SpecError("world embed_dim must be >= 2");
  if (latent_attributes < 1) throw SpecError("world needs at least one latent attribute");
  if (samples_per_category < 1) throw SpecError("world needs samples per category");
  if (descriptions_per_category < 1) throw SpecError("world needs descriptions per category");
  if (noise_sigma < 0.0 || label_noise < 0.0) throw SpecError("world noise must be >= 0");
  if (explicit_categories.empty()) {
    if (num_seen < 1 || num_unseen < 1)
      throw SpecError("world needs at least one seen and one unseen category");
    if (attributes_per_category < 1 || attributes_per_category > latent_attributes)
      throw SpecError("attributes_per_category must lie in [1, latent_attributes]");
    if (!exact_descriptions &&
        (int64_t(1) << attributes_per_category) - 1 < descriptions_per_category)
      throw SpecError("cannot form " + std::to_string(descriptions_per_category) +
                      " distinct descriptions from " + std::to_string(attributes_per_category) +
                      " attributes per category");
    // Guarantee split coverage: every attribute must land in more categories
    // than can ever be unseen at once.
    const int64_t total_slots = (num_seen + num_unseen) * attributes_per_category;
    if (total_slots < latent_attributes * (num_unseen + 1))
      throw SpecError("attribute pool too large to guarantee seen-side coverage: " +
                      std::to_string(total_slots) + " slots for " +
                      std::to_string(latent_attributes) + " attributes with " +
                      std::to_string(num_unseen) + " unseen categories");
  } else {
    for (const auto& c : explicit_categories) {
      if (c.attributes.empty())
        throw SpecError("category '" + c.name + "' has no attributes");
      for (int64_t a : c.attributes)
        if (a < 0 || a >= latent_attributes)
          throw SpecError("category '" + c.name + "' references unknown attribute " +
                          std::to_string(a));
    }
  }
}

SyntheticWorld generate_synthetic_world(const SyntheticWorldSpec& spec) {
  spec.validate();
  const int64_t dim = spec.embed_dim;
  std::vector<std::vector<float>> attrs;
  Rng rng = derive_rng(spec.seed, "world.attributes");
  for (int64_t a = 0; a < spec.latent_attributes; ++a) {
    std::vector<double> v(static_cast<size_t>(dim));
    for (auto& x : v) x = rng.normal();
    attrs.push_back(to_float(normalized(std::move(v))));
  }
  return generate_synthetic_world_with_pool(spec, attrs,
                                            attribute_names(spec.latent_attributes), "class");
}

SyntheticWorld generate_synthetic_world_with_pool(
    const SyntheticWorldSpec& spec, const std::vector<std::vector<float>>& attribute_vectors,
    const std::vector<std::string>& names, const std::string& category_prefix) {
  spec.validate();
  if (static_cast<int64_t>(attribute_vectors.size()) != spec.latent_attributes ||
      static_cast<int64_t>(names.size()) != spec.latent_attributes)
    throw SpecError("attribute pool size does not match the world spec");

  SyntheticWorld world;
  world.spec = spec;
  world.attribute_vectors = attribute_vectors;
  world.attributes.attributes = names;
  {
    uint64_t h = kFnvOffset;
    h = fnv1a64(&spec.seed, sizeof(spec.seed), h);
    world.attributes.provenance = Provenance{"synthetic-world", hash_hex(h), ""};
  }

  const int64_t dim = spec.embed_dim;
  const int64_t num_attrs = spec.latent_attributes;

  // Category layout: explicit, or a balanced random deal of attribute slots
  // so every attribute is used by at least num_unseen + 1 categories.
  std::vector<std::string> cat_names;
  if (spec.explicit_categories.empty()) {
    const int64_t num_categories = spec.num_seen + spec.num_unseen;
    const int64_t total_slots = num_categories * spec.attributes_per_category;
    std::vector<int64_t> slots;
    for (int64_t i = 0; i < total_slots; ++i) slots.push_back(i % num_attrs);
    Rng deal = derive_rng(spec.seed, "world.assignment");
    deal.shuffle(slots);
    world.category_attributes.assign(static_cast<size_t>(num_categories), {});
    size_t cursor = 0;
    for (int64_t c = 0; c < num_categories; ++c) {
      std::set<int64_t> chosen;
      while (static_cast<int64_t>(chosen.size()) < spec.attributes_per_category) {
        // linear probe past duplicates, swapping the found slot forward
        size_t probe = cursor;
        while (probe < slots.size() && chosen.count(slots[probe])) ++probe;
        if (probe == slots.size())
          throw SpecError("attribute deal failed; try another seed or a smaller pool");
        std::swap(slots[cursor], slots[probe]);
        chosen.insert(slots[cursor]);
        ++cursor;
      }
      world.category_attributes[static_cast<size_t>(c)] =
          std::vector<int64_t>(chosen.begin(), chosen.end());
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s_%02d", category_prefix.c_str(), static_cast<int>(c));
      cat_names.emplace_back(buf);
    }
    world.designated_seen.assign(static_cast<size_t>(num_categories), false);
    // Which categories are seen is decided by the split seed downstream; the
    // balanced deal already guarantees coverage for any choice.
  } else {
    for (const auto& c : spec.explicit_categories) {
      cat_names.push_back(c.name);
      world.category_attributes.push_back(c.attributes);
      world.designated_seen.push_back(c.seen);
    }
    // Explicit designations must keep unseen attributes reachable from seen.
    std::set<int64_t> seen_attrs;
    for (size_t c = 0; c < cat_names.size(); ++c)
      if (world.designated_seen[c])
        seen_attrs.insert(world.category_attributes[c].begin(),
                          world.category_attributes[c].end());
    for (size_t c = 0; c < cat_names.size(); ++c) {
      if (world.designated_seen[c]) continue;
      for (int64_t a : world.category_attributes[c])
        if (!seen_attrs.count(a))
          throw SpecError("unseen category '" + cat_names[c] + "' uses attribute '" +
                          names[static_cast<size_t>(a)] +
                          "' that no seen category covers");
    }
  }

  const int64_t num_categories = static_cast<int64_t>(cat_names.size());
  world.dataset.categories = cat_names;
  world.dataset.source = "synthetic";
  world.image_bank = EmbeddingBank(dim);
  world.text_bank = EmbeddingBank(dim);

  auto centroid_of = [&](int64_t c) {
    std::vector<double> centroid(static_cast<size_t>(dim), 0.0);
    const auto& members = world.category_attributes[static_cast<size_t>(c)];
    for (int64_t a : members)
      for (int64_t j = 0; j < dim; ++j)
        centroid[static_cast<size_t>(j)] +=
            static_cast<double>(attribute_vectors[static_cast<size_t>(a)][static_cast<size_t>(j)]);
    for (auto& x : centroid) x /= static_cast<double>(members.size());
    return centroid;
  };

  // Images: noisy centroids.
  int64_t image_index = 0;
  for (int64_t c = 0; c < num_categories; ++c) {
    const std::vector<double> centroid = centroid_of(c);
    Rng rng = derive_rng(spec.seed, "world.samples", static_cast<uint64_t>(c));
    for (int64_t s = 0; s < spec.samples_per_category; ++s) {
      std::vector<double> v = centroid;
      for (auto& x : v) x += spec.noise_sigma * rng.normal();
      const std::vector<float> feature = to_float(normalized(std::move(v)));
      char key[32];
      std::snprintf(key, sizeof(key), "img_%05d", static_cast<int>(image_index++));
      world.image_bank.insert(key, feature);
      DatasetItem item;
      item.key = key;
      item.features = feature;
      item.category = static_cast<int32_t>(c);
      world.dataset.items.push_back(std::move(item));
    }
  }

  // Label ground truth: centroid corrupted by a fixed per-category direction.
  for (int64_t c = 0; c < num_categories; ++c) {
    std::vector<double> v = centroid_of(c);
    Rng rng = derive_rng(spec.seed, "world.labels", static_cast<uint64_t>(c));
    std::vector<double> g(static_cast<size_t>(dim));
    for (auto& x : g) x = rng.normal();
    g = normalized(std::move(g));
    for (int64_t j = 0; j < dim; ++j)
      v[static_cast<size_t>(j)] += spec.label_noise * g[static_cast<size_t>(j)];
    world.text_bank.insert(label_template(cat_names[static_cast<size_t>(c)]),
                           to_float(normalized(std::move(v))));
  }

  // Descriptions: templated strings naming attribute subsets; ground truth is
  // the normalized mean of the named attribute vectors.
  world.descriptions.attribute_vocabulary = names;
  for (int64_t c = 0; c < num_categories; ++c) {
    const auto& members = world.category_attributes[static_cast<size_t>(c)];
    const int64_t m = static_cast<int64_t>(members.size());
    std::vector<std::vector<int64_t>> picks;  // local attribute index subsets
    if (spec.exact_descriptions) {
      std::vector<int64_t> full(static_cast<size_t>(m));
      for (int64_t i = 0; i < m; ++i) full[static_cast<size_t>(i)] = i;
      picks.assign(static_cast<size_t>(spec.descriptions_per_category), full);
    } else {
      if ((int64_t(1) << m) - 1 < spec.descriptions_per_category)
        throw SpecError("category '" + cat_names[static_cast<size_t>(c)] +
                        "' cannot supply enough distinct descriptions");
      picks = enumerate_subsets(m);
      Rng rng = derive_rng(spec.seed, "world.descriptions", static_cast<uint64_t>(c));
      rng.shuffle(picks);
      picks.resize(static_cast<size_t>(spec.descriptions_per_category));
    }
    std::vector<std::string> descs;
    for (size_t pi = 0; pi < picks.size(); ++pi) {
      std::vector<std::string> parts;
      std::vector<double> mean(static_cast<size_t>(dim), 0.0);
      for (int64_t local : picks[pi]) {
        const int64_t a = members[static_cast<size_t>(local)];
        parts.push_back(names[static_cast<size_t>(a)]);
        for (int64_t j = 0; j < dim; ++j)
          mean[static_cast<size_t>(j)] += static_cast<double>(
              attribute_vectors[static_cast<size_t>(a)][static_cast<size_t>(j)]);
      }
      for (auto& x : mean) x /= static_cast<double>(picks[pi].size());
      std::string text = cat_names[static_cast<size_t>(c)] + ": " + join(parts, ", ");
      if (spec.exact_descriptions) text += " (view " + std::to_string(pi + 1) + ")";
      world.text_bank.insert(text, to_float(normalized(std::move(mean))));
      descs.push_back(std::move(text));
    }
    world.descriptions.categories.push_back(cat_names[static_cast<size_t>(c)]);
    world.descriptions.by_category[cat_names[static_cast<size_t>(c)]] = std::move(descs);
  }

  world.dataset.validate();
  world.descriptions.validate();
  world.attributes.validate();
  return world;
}

}  // namespace sempt
