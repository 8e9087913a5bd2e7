#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <string>

#include "otreg/errors.hpp"
#include "otreg/trainer.hpp"

namespace otreg {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v, int line) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw io_error("config line " + std::to_string(line) + ": bad numeric value '" + v + "'");
  return d;
}

long parse_long(const std::string& v, int line) {
  char* end = nullptr;
  const long d = std::strtol(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw io_error("config line " + std::to_string(line) + ": bad integer value '" + v + "'");
  return d;
}

bool parse_bool(const std::string& v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw io_error("config line " + std::to_string(line) + ": bad boolean value '" + v + "'");
}

}  // namespace

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file: " + path);

  RunConfig cfg;
  using Setter = std::function<void(const std::string&, int)>;
  const std::map<std::string, Setter> keys = {
      {"lambda_ot", [&](const std::string& v, int l) { cfg.train.lambda_ot = parse_double(v, l); }},
      {"lambda_spr",
       [&](const std::string& v, int l) { cfg.train.lambda_spr = parse_double(v, l); }},
      {"stage1_epochs",
       [&](const std::string& v, int l) { cfg.train.stage1_epochs = static_cast<int>(parse_long(v, l)); }},
      {"stage2_epochs",
       [&](const std::string& v, int l) { cfg.train.stage2_epochs = static_cast<int>(parse_long(v, l)); }},
      {"learning_rate",
       [&](const std::string& v, int l) { cfg.train.learning_rate = parse_double(v, l); }},
      {"lr_min", [&](const std::string& v, int l) { cfg.train.lr_min = parse_double(v, l); }},
      {"k", [&](const std::string& v, int l) { cfg.train.k = static_cast<int>(parse_long(v, l)); }},
      {"d_h",
       [&](const std::string& v, int l) { cfg.train.d_h = static_cast<int>(parse_long(v, l)); }},
      {"epsilon",
       [&](const std::string& v, int l) { cfg.train.sinkhorn.epsilon = parse_double(v, l); }},
      {"max_iterations",
       [&](const std::string& v, int l) {
         cfg.train.sinkhorn.max_iterations = static_cast<int>(parse_long(v, l));
       }},
      {"tolerance",
       [&](const std::string& v, int l) { cfg.train.sinkhorn.tolerance = parse_double(v, l); }},
      {"log_domain",
       [&](const std::string& v, int l) { cfg.train.sinkhorn.log_domain = parse_bool(v, l); }},
      {"merge_threshold",
       [&](const std::string& v, int l) { cfg.train.merge_threshold = parse_double(v, l); }},
      {"drop_threshold",
       [&](const std::string& v, int l) { cfg.train.drop_threshold = parse_double(v, l); }},
      {"seed",
       [&](const std::string& v, int l) {
         cfg.train.seed = static_cast<std::uint64_t>(parse_long(v, l));
       }},
      {"corpus_seed",
       [&](const std::string& v, int l) {
         cfg.corpus.seed = static_cast<std::uint64_t>(parse_long(v, l));
       }},
      {"vocab_size",
       [&](const std::string& v, int l) { cfg.corpus.vocab_size = static_cast<int>(parse_long(v, l)); }},
      {"d_l",
       [&](const std::string& v, int l) { cfg.corpus.d_l = static_cast<int>(parse_long(v, l)); }},
      {"d_s",
       [&](const std::string& v, int l) { cfg.corpus.d_s = static_cast<int>(parse_long(v, l)); }},
      {"utterance_count",
       [&](const std::string& v, int l) {
         cfg.corpus.utterance_count = static_cast<int>(parse_long(v, l));
       }},
      {"token_len_min",
       [&](const std::string& v, int l) { cfg.corpus.token_len_min = static_cast<int>(parse_long(v, l)); }},
      {"token_len_max",
       [&](const std::string& v, int l) { cfg.corpus.token_len_max = static_cast<int>(parse_long(v, l)); }},
      {"repeat_min",
       [&](const std::string& v, int l) { cfg.corpus.repeat_min = static_cast<int>(parse_long(v, l)); }},
      {"repeat_max",
       [&](const std::string& v, int l) { cfg.corpus.repeat_max = static_cast<int>(parse_long(v, l)); }},
      {"pad_insert_prob",
       [&](const std::string& v, int l) { cfg.corpus.pad_insert_prob = parse_double(v, l); }},
      {"noise_sigma",
       [&](const std::string& v, int l) { cfg.corpus.noise_sigma = parse_double(v, l); }},
  };

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw io_error("config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    auto it = keys.find(key);
    if (it == keys.end())
      throw io_error("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    it->second(value, line_no);
  }

  try {
    validate(cfg.train);
    validate(cfg.corpus);
  } catch (const domain_error& e) {
    throw io_error("config file " + path + ": " + e.what());
  }
  return cfg;
}

}  // namespace otreg
