#include "rankope/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rankope/error.hpp"
#include "rankope/rng.hpp"
#include "rankope/synth.hpp"

namespace rankope {

using nlohmann::json;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(what + ": malformed JSON (" + e.what() + ")");
  }
}

template <class T>
T field(const json& j, const char* name, const std::string& where) {
  if (!j.is_object() || !j.contains(name)) {
    throw DataError(where + ": missing field '" + name + "'");
  }
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw DataError(where + ": field '" + name + "' has the wrong type");
  }
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

json interaction_json(const LoggedInteraction& it) {
  json j;
  j["query"] = it.query;
  j["list"] = it.list.entries();
  j["human"] = it.human.entries();
  if (it.list_propensity) j["list_propensity"] = *it.list_propensity;
  if (it.set_propensity) j["set_propensity"] = *it.set_propensity;
  return j;
}

std::filesystem::path interactions_path(const std::filesystem::path& header) {
  std::filesystem::path p = header;
  return p.replace_extension(".jsonl");
}

}  // namespace

std::string interactions_to_jsonl(const LoggedDataset& data) {
  std::string out;
  for (const auto& it : data.interactions) {
    out += interaction_json(it).dump();
    out += '\n';
  }
  return out;
}

std::vector<LoggedInteraction> interactions_from_jsonl(std::istream& in, int num_responses) {
  std::vector<LoggedInteraction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no);
    const json j = parse_json(line, where);
    LoggedInteraction it;
    const auto query = field<long long>(j, "query", where);
    if (query < 0) throw DataError(where + ": negative query index");
    it.query = static_cast<QueryIndex>(query);
    try {
      it.list = RankedList(field<std::vector<Response>>(j, "list", where), num_responses);
      it.human = HumanRanking(field<std::vector<Response>>(j, "human", where), it.list);
    } catch (const InputError& e) {
      throw DataError(where + ": " + e.what());
    }
    if (j.contains("list_propensity")) it.list_propensity = field<double>(j, "list_propensity", where);
    if (j.contains("set_propensity")) it.set_propensity = field<double>(j, "set_propensity", where);
    out.push_back(std::move(it));
  }
  return out;
}

void save_dataset(const LoggedDataset& data, const std::filesystem::path& header,
                  const FeatureSource& source) {
  data.validate();
  const FeatureTable& features = *data.spec.features;
  const std::filesystem::path jsonl = interactions_path(header);
  json h;
  h["L"] = data.spec.num_responses;
  h["K"] = data.spec.list_length;
  h["n"] = data.size();
  h["d"] = features.dim();
  h["num_queries"] = features.num_queries();
  h["interactions"] = jsonl.filename().string();
  if (source.synthetic_seed) {
    h["features"] = "synthetic:" + std::to_string(*source.synthetic_seed);
    h["latent_dim"] = source.latent_dim;
  } else {
    json table = json::array();
    for (std::size_t q = 0; q < features.num_queries(); ++q) {
      json rows = json::array();
      const Eigen::MatrixXd& m = features.matrix(q);
      for (Eigen::Index a = 0; a < m.rows(); ++a) rows.push_back(to_std(m.row(a).transpose()));
      table.push_back(std::move(rows));
    }
    h["features"] = std::move(table);
  }
  if (data.spec.true_reward_param) h["true_reward_param"] = to_std(*data.spec.true_reward_param);
  write_text(header, h.dump(2) + "\n");
  write_text(jsonl, interactions_to_jsonl(data));
}

LoggedDataset load_dataset(const std::filesystem::path& header) {
  const std::string where = header.string();
  const json h = parse_json(read_text(header), where);
  LoggedDataset data;
  const int L = field<int>(h, "L", where);
  const int K = field<int>(h, "K", where);
  const auto n = field<std::size_t>(h, "n", where);
  const int d = field<int>(h, "d", where);
  const auto num_queries = field<std::size_t>(h, "num_queries", where);
  if (L < 1 || d < 1) throw DataError(where + ": L and d must be positive");
  if (K < 1 || K > L) throw DataError(where + ": header K=" + std::to_string(K) +
                                      " is not in [1, L=" + std::to_string(L) + "]");
  data.spec.num_responses = L;
  data.spec.list_length = K;

  if (!h.contains("features")) throw DataError(where + ": missing field 'features'");
  const json& f = h.at("features");
  if (f.is_string()) {
    const std::string s = f.get<std::string>();
    const std::string prefix = "synthetic:";
    if (s.rfind(prefix, 0) != 0) throw DataError(where + ": unknown feature source '" + s + "'");
    std::uint64_t seed = 0;
    try {
      seed = std::stoull(s.substr(prefix.size()));
    } catch (const std::exception&) {
      throw DataError(where + ": bad synthetic feature seed '" + s + "'");
    }
    const int latent = h.value("latent_dim", 4);
    if (latent * latent != d) {
      throw DataError(where + ": d=" + std::to_string(d) + " does not match latent_dim " +
                      std::to_string(latent));
    }
    data.spec.features = synthetic_features(L, num_queries, latent, Rng(seed));
  } else {
    std::vector<Eigen::MatrixXd> tables;
    try {
      const auto raw = f.get<std::vector<std::vector<std::vector<double>>>>();
      if (raw.size() != num_queries) {
        throw DataError(where + ": feature table has " + std::to_string(raw.size()) +
                        " queries but header num_queries=" + std::to_string(num_queries));
      }
      for (std::size_t q = 0; q < raw.size(); ++q) {
        if (raw[q].size() != static_cast<std::size_t>(L)) {
          throw DataError(where + ": features of query " + std::to_string(q) + " do not have L=" +
                          std::to_string(L) + " rows");
        }
        Eigen::MatrixXd m(L, d);
        for (int a = 0; a < L; ++a) {
          if (raw[q][a].size() != static_cast<std::size_t>(d)) {
            throw DataError(where + ": feature vector of query " + std::to_string(q) +
                            " does not have d=" + std::to_string(d) + " entries");
          }
          for (int j = 0; j < d; ++j) m(a, j) = raw[q][a][j];
        }
        tables.push_back(std::move(m));
      }
    } catch (const json::exception&) {
      throw DataError(where + ": features must be a query x response x dim array");
    }
    data.spec.features = std::make_shared<const FeatureTable>(L, d, std::move(tables));
  }
  if (h.contains("true_reward_param")) {
    data.spec.true_reward_param = to_vector(field<std::vector<double>>(h, "true_reward_param", where));
  }

  std::filesystem::path jsonl = interactions_path(header);
  if (h.contains("interactions")) {
    jsonl = header.parent_path() / field<std::string>(h, "interactions", where);
  }
  std::ifstream in(jsonl, std::ios::binary);
  if (!in) throw IoError("cannot read " + jsonl.string());
  try {
    data.interactions = interactions_from_jsonl(in, L);
  } catch (const DataError& e) {
    throw DataError(jsonl.string() + " " + e.what());
  }
  if (data.interactions.size() != n) {
    throw DataError(where + ": header n=" + std::to_string(n) + " but " + jsonl.string() +
                    " has " + std::to_string(data.interactions.size()) + " interactions");
  }
  for (const auto& it : data.interactions) data.spec.query_ids.push_back(it.query);
  try {
    data.validate();
  } catch (const InputError& e) {
    throw DataError(jsonl.string() + " " + e.what());
  }
  return data;
}

PolicyFile load_policy(const std::filesystem::path& path) {
  const std::string where = path.string();
  const json j = parse_json(read_text(path), where);
  if (j.is_object() && j.contains("theta")) {
    return to_vector(field<std::vector<double>>(j, "theta", where));
  }
  if (j.is_object() && j.contains("probs")) {
    std::vector<Eigen::VectorXd> rows;
    for (const auto& row : field<std::vector<std::vector<double>>>(j, "probs", where)) {
      rows.push_back(to_vector(row));
    }
    try {
      return PolicyTable(std::move(rows));
    } catch (const InputError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  throw DataError(where + ": policy file needs a 'theta' or a 'probs' field");
}

void save_theta(const std::filesystem::path& path, const Eigen::VectorXd& theta) {
  json j;
  j["theta"] = to_std(theta);
  write_text(path, j.dump() + "\n");
}

void save_policy_table(const std::filesystem::path& path, const PolicyTable& table) {
  json rows = json::array();
  for (std::size_t q = 0; q < table.num_queries(); ++q) rows.push_back(to_std(table.probs(q)));
  json j;
  j["probs"] = std::move(rows);
  write_text(path, j.dump() + "\n");
}

PolicyTable policy_table(const PolicyFile& policy, const FeatureTable& features) {
  if (const auto* theta = std::get_if<Eigen::VectorXd>(&policy)) {
    if (theta->size() != features.dim()) {
      throw DataError("policy theta has length " + std::to_string(theta->size()) +
                      " but the features have d=" + std::to_string(features.dim()));
    }
    return PolicyTable::softmax(features, *theta);
  }
  const PolicyTable& table = std::get<PolicyTable>(policy);
  if (table.num_queries() != features.num_queries()) {
    throw DataError("policy table has " + std::to_string(table.num_queries()) +
                    " rows but the dataset has " + std::to_string(features.num_queries()) +
                    " queries");
  }
  for (std::size_t q = 0; q < table.num_queries(); ++q) {
    if (table.probs(q).size() != features.num_responses()) {
      throw DataError("policy table row " + std::to_string(q) + " does not have L entries");
    }
  }
  return table;
}

void save_model(const std::filesystem::path& path, const RewardModel& model) {
  json j;
  j["w"] = to_std(model.w());
  json view;
  if (model.view().is_clean()) {
    view["kind"] = "clean";
  } else {
    view["kind"] = "noisy";
    view["sigma"] = model.view().sigma;
    view["seed"] = model.view().seed;
  }
  j["feature_view"] = view;
  if (const auto& info = model.fit_info()) {
    j["lambda"] = info->ridge;
    j["convergence"] = {{"iterations", info->iterations},
                        {"grad_norm", info->grad_norm},
                        {"objective", info->objective},
                        {"solver", info->solver}};
  }
  write_text(path, j.dump(2) + "\n");
}

RewardModel load_model(const std::filesystem::path& path, const FeatureTablePtr& clean_features) {
  const std::string where = path.string();
  const json j = parse_json(read_text(path), where);
  const Eigen::VectorXd w = to_vector(field<std::vector<double>>(j, "w", where));
  if (w.size() != clean_features->dim()) {
    throw DataError(where + ": model w has length " + std::to_string(w.size()) +
                    " but the features have d=" + std::to_string(clean_features->dim()));
  }
  FeatureView view = FeatureView::clean();
  if (j.contains("feature_view")) {
    const json& v = j.at("feature_view");
    const auto kind = field<std::string>(v, "kind", where + " feature_view");
    if (kind == "noisy") {
      view = FeatureView::noisy(field<double>(v, "sigma", where + " feature_view"),
                                field<std::uint64_t>(v, "seed", where + " feature_view"));
    } else if (kind != "clean") {
      throw DataError(where + ": unknown feature view '" + kind + "'");
    }
  }
  RewardModel model(w, clean_features, view);
  if (j.contains("convergence")) {
    const json& c = j.at("convergence");
    FitInfo info;
    info.ridge = j.value("lambda", 0.0);
    info.iterations = c.value("iterations", 0);
    info.grad_norm = c.value("grad_norm", 0.0);
    info.objective = c.value("objective", 0.0);
    info.solver = c.value("solver", std::string());
    model.set_fit_info(info);
  }
  return model;
}

}  // namespace rankope
