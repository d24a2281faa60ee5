#include "stratdef/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "stratdef/error.hpp"
#include "stratdef/textio.hpp"

namespace stratdef {

FeatureVector FeatureVector::from_bits(std::vector<std::uint8_t> bits) {
  for (std::uint8_t b : bits) {
    if (b != 0 && b != 1) {
      throw ContractError("feature vector element is not 0/1");
    }
  }
  FeatureVector v;
  v.bits_ = std::move(bits);
  return v;
}

std::uint64_t FeatureVector::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bits_) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t Dataset::count_label(int label) const {
  std::size_t n = 0;
  for (const auto& s : samples) {
    if (s.label == label) ++n;
  }
  return n;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.phi = phi;
  out.feature_names = feature_names;
  out.family_of = family_of;
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) out.samples.push_back(samples.at(i));
  return out;
}

void Dataset::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& s : samples) {
    if (s.vector.size() != phi) {
      throw ContractError("sample " + s.id + " has wrong feature count");
    }
    if (s.label != kBenign && s.label != kMalware) {
      throw ContractError("sample " + s.id + " has invalid label");
    }
    if (!seen.insert(s.id).second) {
      throw ContractError("duplicate sample id: " + s.id);
    }
  }
}

PerturbationPolicy PerturbationPolicy::allow_all(std::size_t phi) {
  return {std::vector<std::uint8_t>(phi, 1), std::vector<std::uint8_t>(phi, 1)};
}

PerturbationPolicy PerturbationPolicy::deny_all(std::size_t phi) {
  return {std::vector<std::uint8_t>(phi, 0), std::vector<std::uint8_t>(phi, 0)};
}

namespace {

// add / remove permission for one DREBIN-style family tag
std::pair<bool, bool> family_permissions(const std::string& family) {
  if (family == "S1" || family == "S2" || family == "S4") return {true, false};
  if (family == "S3" || family == "S5" || family == "S7" || family == "S8") {
    return {true, true};
  }
  return {false, false};  // S6 and anything unknown
}

}  // namespace

PerturbationPolicy PerturbationPolicy::from_families(
    const std::vector<std::string>& family_of) {
  PerturbationPolicy p = deny_all(family_of.size());
  for (std::size_t i = 0; i < family_of.size(); ++i) {
    auto [add, remove] = family_permissions(family_of[i]);
    p.may_add[i] = add ? 1 : 0;
    p.may_remove[i] = remove ? 1 : 0;
  }
  return p;
}

std::uint64_t PerturbationPolicy::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::vector<std::uint8_t>& v) {
    for (std::uint8_t b : v) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  mix(may_add);
  mix(may_remove);
  return h;
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  const std::string text = read_text_file(path);
  Dataset d;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::size_t next_id = 0;
  auto ctx = [&](const char* what) {
    return path.string() + ":" + std::to_string(lineno) + ": " + what;
  };

  if (format == DatasetFormat::SparseIndex) {
    bool have_phi = false;
    while (std::getline(in, line)) {
      ++lineno;
      std::string_view sv = trim(line);
      if (sv.empty()) continue;
      if (sv[0] == '#') {
        auto toks = split_ws(sv.substr(1));
        if (!toks.empty() && toks[0] == "phi") {
          if (toks.size() != 2) throw ParseError(ctx("malformed #phi header"));
          long long v = parse_int(toks[1], ctx("#phi header"));
          if (v < 0) throw ParseError(ctx("negative feature count"));
          d.phi = static_cast<std::size_t>(v);
          have_phi = true;
        }
        continue;
      }
      if (!have_phi) {
        throw ParseError(ctx("sample line before '#phi <n>' header"));
      }
      auto toks = split_ws(sv);
      long long label = parse_int(toks[0], ctx("label"));
      if (label != 0 && label != 1) throw ParseError(ctx("label must be 0/1"));
      FeatureVector v(d.phi);
      for (std::size_t i = 1; i < toks.size(); ++i) {
        long long idx = parse_int(toks[i], ctx("feature index"));
        if (idx < 0 || static_cast<std::size_t>(idx) >= d.phi) {
          throw BoundsError(ctx("feature index out of range") + ": " +
                            std::to_string(idx) + " with phi " +
                            std::to_string(d.phi));
        }
        v.set(static_cast<std::size_t>(idx), true);  // duplicates collapse
      }
      d.samples.push_back(
          {std::move(v), static_cast<int>(label), std::to_string(next_id++)});
    }
    if (!have_phi) {
      throw ParseError(path.string() + ": missing '#phi <n>' header");
    }
  } else {
    while (std::getline(in, line)) {
      ++lineno;
      std::string_view sv = trim(line);
      if (sv.empty() || sv[0] == '#') continue;
      auto toks = split_on(sv, ',');
      if (toks.size() < 2) throw ParseError(ctx("expected label,bit,bit,..."));
      long long label = parse_int(trim(toks[0]), ctx("label"));
      if (label != 0 && label != 1) throw ParseError(ctx("label must be 0/1"));
      if (d.phi == 0 && d.samples.empty()) d.phi = toks.size() - 1;
      if (toks.size() - 1 != d.phi) throw ParseError(ctx("ragged row"));
      std::vector<std::uint8_t> bits(d.phi);
      for (std::size_t i = 0; i < d.phi; ++i) {
        long long b = parse_int(trim(toks[i + 1]), ctx("bit"));
        if (b != 0 && b != 1) throw ParseError(ctx("bit must be 0/1"));
        bits[i] = static_cast<std::uint8_t>(b);
      }
      d.samples.push_back({FeatureVector::from_bits(std::move(bits)),
                           static_cast<int>(label), std::to_string(next_id++)});
    }
  }
  d.validate();
  return d;
}

void write_dataset(const std::filesystem::path& path, const Dataset& d,
                   DatasetFormat format) {
  std::string out;
  if (format == DatasetFormat::SparseIndex) {
    out += "#phi " + std::to_string(d.phi) + "\n";
    for (const auto& s : d.samples) {
      out += std::to_string(s.label);
      for (std::size_t i = 0; i < d.phi; ++i) {
        if (s.vector[i]) {
          out += ' ';
          out += std::to_string(i);
        }
      }
      out += '\n';
    }
  } else {
    for (const auto& s : d.samples) {
      out += std::to_string(s.label);
      for (std::size_t i = 0; i < d.phi; ++i) {
        out += ',';
        out += s.vector[i] ? '1' : '0';
      }
      out += '\n';
    }
  }
  write_text_file(path, out);
}

namespace {

// "0-9,12,20-31" -> indices
std::vector<std::size_t> parse_index_ranges(std::string_view spec,
                                            std::size_t phi,
                                            const std::string& ctx) {
  std::vector<std::size_t> out;
  for (const auto& part : split_on(spec, ',')) {
    std::string_view p = trim(part);
    if (p.empty()) continue;
    auto dash = p.find('-');
    long long lo, hi;
    if (dash == std::string_view::npos) {
      lo = hi = parse_int(p, ctx);
    } else {
      lo = parse_int(trim(p.substr(0, dash)), ctx);
      hi = parse_int(trim(p.substr(dash + 1)), ctx);
    }
    if (lo < 0 || hi < lo || static_cast<std::size_t>(hi) >= phi) {
      throw BoundsError(ctx + ": index range out of bounds: " + std::string(p));
    }
    for (long long i = lo; i <= hi; ++i) {
      out.push_back(static_cast<std::size_t>(i));
    }
  }
  return out;
}

}  // namespace

PerturbationPolicy load_policy(const std::filesystem::path& path,
                               std::size_t phi) {
  PerturbationPolicy p = PerturbationPolicy::deny_all(phi);
  std::vector<std::uint8_t> covered(phi, 0);
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = trim(line);
    if (sv.empty() || sv[0] == '#') continue;
    const std::string ctx = path.string() + ":" + std::to_string(lineno);
    std::string features_spec;
    int add = -1, remove = -1;
    for (const auto& tok : split_ws(sv)) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) throw ParseError(ctx + ": expected key=value");
      std::string key = tok.substr(0, eq);
      std::string val = tok.substr(eq + 1);
      if (key == "family") {
        // name kept for provenance only
      } else if (key == "features") {
        features_spec = val;
      } else if (key == "add") {
        add = static_cast<int>(parse_int(val, ctx + ": add"));
      } else if (key == "remove") {
        remove = static_cast<int>(parse_int(val, ctx + ": remove"));
      } else {
        throw ParseError(ctx + ": unknown key '" + key + "'");
      }
    }
    if (features_spec.empty() || add < 0 || remove < 0) {
      throw ParseError(ctx + ": need features=, add=, remove=");
    }
    for (std::size_t i : parse_index_ranges(features_spec, phi, ctx)) {
      if (covered[i]) {
        throw ParseError(ctx + ": feature " + std::to_string(i) +
                         " assigned to two families");
      }
      covered[i] = 1;
      p.may_add[i] = add ? 1 : 0;
      p.may_remove[i] = remove ? 1 : 0;
    }
  }
  return p;
}

void write_policy(const std::filesystem::path& path,
                  const PerturbationPolicy& policy,
                  const std::vector<std::string>& family_of) {
  // Group contiguous runs per family so the file stays readable.
  std::map<std::string, std::vector<std::size_t>> by_family;
  for (std::size_t i = 0; i < family_of.size(); ++i) {
    by_family[family_of[i]].push_back(i);
  }
  std::string out;
  for (const auto& [family, indices] : by_family) {
    std::string ranges;
    std::size_t run_start = indices[0], prev = indices[0];
    auto flush = [&](std::size_t last) {
      if (!ranges.empty()) ranges += ',';
      ranges += std::to_string(run_start);
      if (last != run_start) ranges += '-' + std::to_string(last);
    };
    for (std::size_t k = 1; k < indices.size(); ++k) {
      if (indices[k] != prev + 1) {
        flush(prev);
        run_start = indices[k];
      }
      prev = indices[k];
    }
    flush(prev);
    const std::size_t i0 = indices[0];
    out += "family=" + family + " features=" + ranges +
           " add=" + (policy.may_add[i0] ? "1" : "0") +
           " remove=" + (policy.may_remove[i0] ? "1" : "0") + "\n";
  }
  write_text_file(path, out);
}

namespace {

// Largest-remainder split of n into 64:16:20; deterministic tie order
// train > validation > test.
std::array<std::size_t, 3> split_counts(std::size_t n) {
  const double fractions[3] = {0.64, 0.16, 0.20};
  std::array<std::size_t, 3> counts{};
  double remainders[3];
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = fractions[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(exact);
    remainders[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (remainders[i] > remainders[best]) best = i;
    }
    ++counts[best];
    remainders[best] = -1.0;
    ++assigned;
  }
  return counts;
}

}  // namespace

std::pair<Dataset, SplitSpec> balance_and_split(const Dataset& d,
                                                std::uint64_t seed) {
  std::vector<std::size_t> benign, malware;
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    (d.samples[i].label == kBenign ? benign : malware).push_back(i);
  }
  if (benign.empty() || malware.empty()) {
    throw ConfigError("balance_and_split: a class is empty");
  }
  if (benign.size() < 10 || malware.size() < 10) {
    throw ConfigError("balance_and_split: need >= 10 samples per class");
  }

  Rng rng(derive_seed(seed, "balance_and_split"));
  const std::size_t per_class = std::min(benign.size(), malware.size());
  auto pick = [&](std::vector<std::size_t>& cls) {
    if (cls.size() > per_class) {
      auto keep = rng.sample_without_replacement(cls.size(), per_class);
      std::sort(keep.begin(), keep.end());
      std::vector<std::size_t> kept;
      kept.reserve(per_class);
      for (std::size_t k : keep) kept.push_back(cls[k]);
      cls = std::move(kept);
    }
  };
  pick(benign);
  pick(malware);

  std::vector<std::size_t> all = benign;
  all.insert(all.end(), malware.begin(), malware.end());
  std::sort(all.begin(), all.end());
  Dataset balanced = d.subset(all);

  // Stratified split: each class partitioned 64:16:20 independently.
  SplitSpec spec;
  spec.seed = seed;
  for (int label : {kBenign, kMalware}) {
    std::vector<std::size_t> cls;
    for (std::size_t i = 0; i < balanced.samples.size(); ++i) {
      if (balanced.samples[i].label == label) cls.push_back(i);
    }
    rng.shuffle(cls);
    auto counts = split_counts(cls.size());
    std::size_t pos = 0;
    for (std::size_t k = 0; k < counts[0]; ++k) spec.train.push_back(cls[pos++]);
    for (std::size_t k = 0; k < counts[1]; ++k) {
      spec.validation.push_back(cls[pos++]);
    }
    for (std::size_t k = 0; k < counts[2]; ++k) spec.test.push_back(cls[pos++]);
  }
  std::sort(spec.train.begin(), spec.train.end());
  std::sort(spec.validation.begin(), spec.validation.end());
  std::sort(spec.test.begin(), spec.test.end());
  return {std::move(balanced), std::move(spec)};
}

Dataset synth_dataset(std::size_t phi, std::size_t n_per_class,
                      double class_separation, std::uint64_t seed) {
  if (phi < 8) throw ConfigError("synth_dataset: phi must be >= 8");
  if (n_per_class < 10) {
    throw ConfigError("synth_dataset: n_per_class must be >= 10");
  }
  if (class_separation < 0.0 || class_separation > 1.0) {
    throw ConfigError("synth_dataset: class_separation must be in [0,1]");
  }

  Rng rng(derive_seed(seed, "synth_dataset"));
  const auto n_informative =
      static_cast<std::size_t>(std::llround(class_separation * phi));

  // Informative features: P(on | malware) = 0.7, P(on | benign) = 0.1,
  // direction alternating so neither class is uniformly denser.
  // Uninformative: class-independent base rate 0.3.
  std::vector<int> direction(phi, 0);
  auto informative = rng.sample_without_replacement(phi, n_informative);
  std::sort(informative.begin(), informative.end());
  for (std::size_t k = 0; k < informative.size(); ++k) {
    direction[informative[k]] = (k % 2 == 0) ? 1 : -1;
  }

  Dataset d;
  d.phi = phi;
  std::size_t next_id = 0;
  for (int label : {kBenign, kMalware}) {
    for (std::size_t n = 0; n < n_per_class; ++n) {
      FeatureVector v(phi);
      for (std::size_t i = 0; i < phi; ++i) {
        double p_on = 0.3;
        if (direction[i] == 1) {
          p_on = (label == kMalware) ? 0.7 : 0.1;
        } else if (direction[i] == -1) {
          p_on = (label == kMalware) ? 0.1 : 0.7;
        }
        v.set(i, rng.uniform() < p_on);
      }
      d.samples.push_back({std::move(v), label, std::to_string(next_id++)});
    }
  }
  return d;
}

FeatureVector apply_policy(const PerturbationPolicy& policy,
                           const FeatureVector& original,
                           const FeatureVector& perturbed) {
  if (original.size() != perturbed.size() ||
      original.size() != policy.phi()) {
    throw ContractError("apply_policy: length mismatch");
  }
  FeatureVector out = perturbed;
  for (std::size_t i = 0; i < original.size(); ++i) {
    if (original[i] == perturbed[i]) continue;
    const bool adding = original[i] == 0;
    const bool permitted = adding ? policy.may_add[i] : policy.may_remove[i];
    if (!permitted) out.set(i, original[i]);
  }
  return out;
}

}  // namespace stratdef
