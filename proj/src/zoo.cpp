#include "stratdef/zoo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "stratdef/error.hpp"
#include "stratdef/textio.hpp"

namespace stratdef {

std::string format_ratio(double ratio) {
  std::string s = fmt_double(ratio);
  return s;
}

std::string DefenseSpec::suffix() const {
  switch (kind) {
    case Kind::Vanilla: return "";
    case Kind::AT: return "-AT-" + format_ratio(param);
    case Kind::RFN: return "-RFN";
    case Kind::DD: return "-DD";
    case Kind::SEC: return "";  // the SEC id is the family name itself
    case Kind::SecAT: return "-AT-" + format_ratio(param);
  }
  return "";
}

namespace {

std::string defense_kind_name(DefenseSpec::Kind k) {
  switch (k) {
    case DefenseSpec::Kind::Vanilla: return "vanilla";
    case DefenseSpec::Kind::AT: return "at";
    case DefenseSpec::Kind::RFN: return "rfn";
    case DefenseSpec::Kind::DD: return "dd";
    case DefenseSpec::Kind::SEC: return "sec";
    case DefenseSpec::Kind::SecAT: return "sec_at";
  }
  throw ContractError("unknown defense kind");
}

DefenseSpec::Kind defense_kind_from(const std::string& s) {
  if (s == "vanilla") return DefenseSpec::Kind::Vanilla;
  if (s == "at") return DefenseSpec::Kind::AT;
  if (s == "rfn") return DefenseSpec::Kind::RFN;
  if (s == "dd") return DefenseSpec::Kind::DD;
  if (s == "sec") return DefenseSpec::Kind::SEC;
  if (s == "sec_at") return DefenseSpec::Kind::SecAT;
  throw ParseError("unknown defense kind: " + s);
}

std::unique_ptr<Classifier> fit_vanilla(ModelFamily family,
                                        const Dataset& train_data,
                                        const ModelHypers& hyper,
                                        std::uint64_t seed,
                                        const Dataset* calibration) {
  switch (family) {
    case ModelFamily::DT:
      return std::make_unique<DecisionTree>(
          DecisionTree::train(train_data, hyper.tree, seed));
    case ModelFamily::RF:
      return std::make_unique<RandomForest>(
          RandomForest::train(train_data, hyper.forest, seed));
    case ModelFamily::NN:
      return std::make_unique<NeuralNet>(
          NeuralNet::train(train_data, hyper.nn, seed));
    case ModelFamily::LSVM:
      return std::make_unique<LinearSvm>(
          LinearSvm::train(train_data, hyper.linear, seed, calibration));
  }
  throw ContractError("unknown model family");
}

}  // namespace

CandidateModel train_model(ModelFamily family, const Dataset& train_data,
                           const ModelHypers& hyper, std::uint64_t seed,
                           const Dataset* calibration) {
  CandidateModel m;
  m.id = family_name(family);
  m.family = family;
  m.defense = {DefenseSpec::Kind::Vanilla, 0.0};
  m.phi = train_data.phi;
  m.seed = seed;
  m.impl = fit_vanilla(family, train_data, hyper, seed, calibration);
  return m;
}

std::size_t adversarial_count(double ratio, std::size_t test_set_size) {
  return static_cast<std::size_t>(
      std::llround(ratio * static_cast<double>(test_set_size) / 2.0));
}

CandidateModel adversarial_train(ModelFamily family, const Dataset& train_data,
                                 const std::vector<FeatureVector>& adv_pool,
                                 double ratio, std::size_t test_set_size,
                                 const ModelHypers& hyper, std::uint64_t seed,
                                 const Dataset* calibration,
                                 double sec_bound) {
  const std::size_t count = adversarial_count(ratio, test_set_size);
  if (adv_pool.size() < count) {
    throw ConfigError("adversarial_train: pool of " +
                      std::to_string(adv_pool.size()) + " is too small, need " +
                      std::to_string(count) + " examples");
  }

  Dataset augmented = train_data;
  Rng rng(derive_seed(seed, "adv_train_draw"));
  auto picks = rng.sample_without_replacement(adv_pool.size(), count);
  std::sort(picks.begin(), picks.end());
  std::size_t next = 0;
  for (std::size_t p : picks) {
    // adversarial examples are functionality-preserving malware variants
    augmented.samples.push_back(
        {adv_pool[p], kMalware, "adv" + std::to_string(next++)});
  }

  const bool sec = sec_bound > 0.0;
  CandidateModel m;
  m.family = family;
  m.defense = {sec ? DefenseSpec::Kind::SecAT : DefenseSpec::Kind::AT, ratio};
  m.phi = train_data.phi;
  m.seed = seed;
  if (sec) {
    if (family != ModelFamily::LSVM) {
      throw ConfigError("sec_at defense requires the LSVM family");
    }
    LinearHyper h = hyper.linear;
    h.weight_bound = sec_bound;
    m.impl = std::make_unique<LinearSvm>(
        LinearSvm::train(augmented, h, seed, calibration));
    m.id = "SECSVM" + m.defense.suffix();
  } else {
    m.impl = fit_vanilla(family, augmented, hyper, seed, calibration);
    m.id = family_name(family) + m.defense.suffix();
  }
  return m;
}

CandidateModel nullify_features(ModelFamily family, const Dataset& train_data,
                                double rate, const ModelHypers& hyper,
                                std::uint64_t seed,
                                const Dataset* calibration) {
  auto mask = NullifiedModel::draw_mask(train_data.phi, rate, seed);
  Dataset masked_train = NullifiedModel::mask_dataset(train_data, mask);
  Dataset masked_calib;
  const Dataset* calib_ptr = nullptr;
  if (calibration) {
    masked_calib = NullifiedModel::mask_dataset(*calibration, mask);
    calib_ptr = &masked_calib;
  }
  auto base = fit_vanilla(family, masked_train, hyper, seed, calib_ptr);

  CandidateModel m;
  m.id = family_name(family) + "-RFN";
  m.family = family;
  m.defense = {DefenseSpec::Kind::RFN, rate};
  m.phi = train_data.phi;
  m.seed = seed;
  m.impl = std::make_unique<NullifiedModel>(std::move(mask), std::move(base));
  return m;
}

CandidateModel distill(const Dataset& train_data, double temperature,
                       const ModelHypers& hyper, std::uint64_t seed) {
  if (temperature <= 0.0) {
    throw ConfigError("distillation temperature must be > 0");
  }
  NnHyper teacher_hyper = hyper.nn;
  teacher_hyper.temperature = temperature;
  NeuralNet teacher =
      NeuralNet::train(train_data, teacher_hyper, derive_seed(seed, "teacher"));

  std::vector<SoftLabel> soft;
  soft.reserve(train_data.size());
  for (const Sample& s : train_data.samples) {
    soft.push_back(teacher.soft_label(s.vector, temperature));
  }
  // Soft targets carry a much weaker learning signal than one-hot labels,
  // so the student gets a larger epoch budget.
  NnHyper student_hyper = teacher_hyper;
  student_hyper.epochs = teacher_hyper.epochs * 8;
  NeuralNet student = NeuralNet::train_soft(train_data, soft, student_hyper,
                                            derive_seed(seed, "student"));

  CandidateModel m;
  m.id = "NN-DD";
  m.family = ModelFamily::NN;
  m.defense = {DefenseSpec::Kind::DD, temperature};
  m.phi = train_data.phi;
  m.seed = seed;
  m.impl = std::make_unique<NeuralNet>(std::move(student));
  return m;
}

CandidateModel train_sec_linear(const Dataset& train_data, double weight_bound,
                                const ModelHypers& hyper, std::uint64_t seed,
                                const Dataset* calibration) {
  if (weight_bound < 0.0) throw ConfigError("sec weight bound must be >= 0");
  LinearHyper h = hyper.linear;
  h.weight_bound = weight_bound;

  CandidateModel m;
  m.id = "SECSVM";
  m.family = ModelFamily::LSVM;
  m.defense = {DefenseSpec::Kind::SEC, weight_bound};
  m.phi = train_data.phi;
  m.seed = seed;
  m.impl = std::make_unique<LinearSvm>(
      LinearSvm::train(train_data, h, seed, calibration));
  return m;
}

void save_model(const std::filesystem::path& path, const CandidateModel& m) {
  std::ostringstream out;
  out << "stratdef-model 1\n";
  out << "id " << m.id << '\n';
  out << "family " << family_name(m.family) << '\n';
  out << "defense " << defense_kind_name(m.defense.kind) << ' '
      << fmt_double(m.defense.param) << '\n';
  out << "phi " << m.phi << '\n';
  out << "seed " << m.seed << '\n';
  m.impl->save(out);
  write_text_file(path, out.str());
}

CandidateModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model archive: " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "stratdef-model" || version != 1) {
    throw ParseError("not a model archive: " + path.string());
  }
  CandidateModel m;
  std::string key;
  in >> key >> m.id;
  std::string fam;
  in >> key >> fam;
  m.family = family_from_name(fam);
  std::string kind, param;
  in >> key >> kind >> param;
  m.defense.kind = defense_kind_from(kind);
  m.defense.param = parse_double(param, "defense param");
  in >> key >> m.phi;
  in >> key >> m.seed;
  m.impl = load_classifier(in);
  if (m.impl->phi() != m.phi) {
    throw ParseError("model archive phi mismatch: " + path.string());
  }
  return m;
}

const CandidateModel* find_model_ptr(const ModelZoo& zoo,
                                     const std::string& id) {
  for (const auto& m : zoo) {
    if (m.id == id) return &m;
  }
  return nullptr;
}

const CandidateModel& find_model(const ModelZoo& zoo, const std::string& id) {
  const CandidateModel* m = find_model_ptr(zoo, id);
  if (!m) throw ConfigError("unknown model id: " + id);
  return *m;
}

}  // namespace stratdef
