// tgvlm command-line entry point.
//
//   tgvlm gen-data --dataset data/train.jsonl --n-samples 256 --seed 7
//   tgvlm cache-features --dataset data/train.jsonl --cache data/train.cache
//   tgvlm train --config run.json --epochs-phase2 20
//   tgvlm eval | predict | ablation | inspect-gating ...
//
// Every RunConfig field is a flag; --config FILE loads a JSON object with the
// same keys, and flags given on the command line win over the file.

#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tgvlm/commands.hpp"
#include "tgvlm/errors.hpp"

using nlohmann::json;

namespace {

json parse_flag_value(const std::string& key, const std::string& text, const json& like) {
  try {
    if (like.is_boolean()) {
      if (text == "true" || text == "1" || text == "yes") return true;
      if (text == "false" || text == "0" || text == "no") return false;
      throw std::invalid_argument("not a boolean");
    }
    if (like.is_number_unsigned()) {
      if (text.empty() || text[0] == '-') throw std::invalid_argument("negative");
      std::size_t used = 0;
      const unsigned long long v = std::stoull(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing characters");
      return v;
    }
    if (like.is_number()) {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing characters");
      return v;
    }
    if (like.is_array()) {
      json arr = json::array();
      std::stringstream ss(text);
      for (std::string part; std::getline(ss, part, ',');) arr.push_back(parse_flag_value(key, part, like.at(0)));
      if (arr.size() != like.size()) throw std::invalid_argument("expected " + std::to_string(like.size()) + " values");
      return arr;
    }
  } catch (const std::exception& e) {
    throw tgvlm::InputError("--" + key + " " + text + ": " + e.what());
  }
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Region-grounded spatial VQA toolkit"};
  app.require_subcommand(1);
  const json defaults = tgvlm::config_to_json(tgvlm::RunConfig{});

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-data", "generate a synthetic dataset"},
      {"cache-features", "run the frozen encoders and cache region features"},
      {"train", "two-phase training from cached features"},
      {"eval", "generate, normalize and score answers"},
      {"predict", "write normalized predictions as JSON lines"},
      {"ablation", "train and score the five MoE/phase configurations"},
      {"inspect-gating", "print per-token expert selections and usage"},
  };
  std::string config_path;
  std::map<std::string, std::string> flags;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON file with any of the flags below");
    for (const auto& [key, value] : defaults.items()) {
      const std::string shown = value.is_string() ? value.get<std::string>() : value.dump();
      sub->add_option("--" + key, flags[key], "default: " + shown);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    json merged = config_path.empty() ? defaults : tgvlm::config_to_json(tgvlm::load_config(config_path));
    for (const auto& [name, _] : commands) {
      CLI::App* sub = app.get_subcommand(name);
      if (!sub->parsed()) continue;
      for (const auto& [key, value] : defaults.items()) {
        if (sub->get_option("--" + key)->count() > 0) merged[key] = parse_flag_value(key, flags[key], value);
      }
    }
    const tgvlm::RunConfig config = tgvlm::config_from_json(merged);

    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "gen-data") {
      tgvlm::cmd_gen_data(config, std::cout);
    } else if (cmd == "cache-features") {
      tgvlm::cmd_cache_features(config, std::cout);
    } else if (cmd == "train") {
      tgvlm::cmd_train(config, std::cout);
    } else if (cmd == "eval") {
      tgvlm::cmd_eval(config, std::cout);
    } else if (cmd == "predict") {
      tgvlm::cmd_predict(config, std::cout);
    } else if (cmd == "ablation") {
      tgvlm::cmd_ablation(config, std::cout);
    } else if (cmd == "inspect-gating") {
      tgvlm::cmd_inspect_gating(config, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "tgvlm: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
