#include <iostream>

#include <CLI11.hpp>

#include "mvre/cli/commands.hpp"
#include "mvre/geotile/mock_server.hpp"

using namespace mvre;

namespace {

void add_data_options(CLI::App* cmd, cli::DataOptions& d) {
  cmd->add_option("--data", d.data, "CSV file or dataset directory holding data.csv")->required();
  cmd->add_option("--schema", d.schema, "Schema JSON (default: schema.json next to the CSV)");
  cmd->add_option("--tiles", d.tiles, "Tile directory or URL template containing {quadkey}");
  cmd->add_option("--split", d.split, "random or geo:<locality>[,<locality>...]")->capture_default_str();
}

void add_train_config(CLI::App* cmd, strategies::TrainConfig& c) {
  cmd->add_option("--epochs", c.max_epochs, "Maximum training epochs")->capture_default_str();
  cmd->add_option("--lr", c.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--batch", c.batch, "Minibatch size")->capture_default_str();
  cmd->add_option("--image-size", c.image_size, "Side length images are resized to")->capture_default_str();
  cmd->add_option("--conv1", c.conv1_channels, "Channels of the first convolution")->capture_default_str();
  cmd->add_option("--conv2", c.conv2_channels, "Channels of the second convolution")->capture_default_str();
  cmd->add_option("--penultimate", c.penultimate, "Width of the image feature layer")->capture_default_str();
  cmd->add_option("--branch-width", c.branch_width, "Hidden width of the black-box branches")->capture_default_str();
  cmd->add_option("--trees", c.forest.n_trees, "Random forest size")->capture_default_str();
  cmd->add_option("--max-depth", c.forest.max_depth, "Random forest depth limit")->capture_default_str();
  cmd->add_option("--min-leaf", c.forest.min_leaf, "Minimum samples per leaf")->capture_default_str();
  cmd->add_option("--max-features", c.forest.max_features, "Features tried per split (0 = d/3)")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view real estate appraisal benchmark"};
  app.require_subcommand(1);

  cli::SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset (CSV + tile store)");
  synth_cmd->add_option("--n", synth.config.n, "Number of records")->capture_default_str();
  synth_cmd->add_option("--seed", synth.config.seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--gamma", synth.config.gamma, "Weight of image quality in log price")->capture_default_str();
  synth_cmd->add_option("--sigma", synth.config.sigma, "Noise standard deviation in log price")->capture_default_str();
  synth_cmd->add_option("--image-size", synth.config.image_size, "Tile side length in pixels")->capture_default_str();
  synth_cmd->add_flag("--interaction", synth.config.interaction, "Add the quality x first-feature interaction");
  synth_cmd->add_option("--interaction-strength", synth.config.interaction_strength)->capture_default_str();
  synth_cmd->add_option("--localities", synth.config.localities, "Number of localities")->capture_default_str();
  synth_cmd->add_option("--locality-fidelity", synth.config.locality_fidelity,
                        "Probability that locality follows image quality")
      ->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "Output directory (default: $MVRE_OUT/synth)");

  cli::TileQuery tq;
  auto* tiles_cmd = app.add_subcommand("tiles", "Tile math helpers");
  tiles_cmd->require_subcommand(1);
  auto* qk_cmd = tiles_cmd->add_subcommand("quadkey", "Tile coordinate and quadkey of a point");
  qk_cmd->add_option("--lat", tq.lat)->required();
  qk_cmd->add_option("--lon", tq.lon)->required();
  qk_cmd->add_option("--level", tq.level)->capture_default_str();
  auto* res_cmd = tiles_cmd->add_subcommand("resolution", "Ground resolution and tile footprint");
  res_cmd->add_option("--lat", tq.lat)->capture_default_str();
  res_cmd->add_option("--level", tq.level)->capture_default_str();

  cli::TrainOptions train;
  std::string models;
  auto* train_cmd = app.add_subcommand("train", "Train strategies, save artifacts and report test metrics");
  train_cmd->add_option("--model", models, "baseline, m1..m5, a comma list, or all")->required();
  add_data_options(train_cmd, train.data);
  train_cmd->add_option("--seed", train.seeds, "Seed (repeat for several)")->capture_default_str();
  add_train_config(train_cmd, train.config);
  train_cmd->add_option("--jobs", train.jobs, "Strategies trained in parallel")->capture_default_str();
  train_cmd->add_option("--out", train.out, "Output root (default: $MVRE_OUT or ./mvre_out)");

  cli::EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate saved artifacts on a test split");
  eval_cmd->add_option("--artifacts", eval.artifacts, "Artifact directory (default: <out>/artifacts)");
  add_data_options(eval_cmd, eval.data);
  eval_cmd->add_option("--seed", eval.seed, "Override the split seed stored in each artifact");
  eval_cmd->add_option("--format", eval.format, "md, csv or json")->capture_default_str();
  eval_cmd->add_option("--out", eval.out, "Output root (default: $MVRE_OUT or ./mvre_out)");

  cli::CoefOptions coef;
  auto* coef_cmd = app.add_subcommand("coef", "Print coefficients of an interpretable artifact");
  coef_cmd->add_option("--artifact", coef.artifact)->required();
  coef_cmd->add_option("--format", coef.format, "md or json")->capture_default_str();

  std::string serve_root;
  int serve_port = 8080;
  auto* serve_cmd = app.add_subcommand("serve-tiles", "Serve a tile directory over HTTP on 127.0.0.1");
  serve_cmd->add_option("--root", serve_root, "Tile store root")->required();
  serve_cmd->add_option("--port", serve_port)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kOk : cli::kUsage;
  }

  try {
    if (*synth_cmd) {
      cli::cmd_synth(synth, std::cout);
    } else if (*qk_cmd) {
      cli::cmd_tiles_quadkey(tq, std::cout);
    } else if (*res_cmd) {
      cli::cmd_tiles_resolution(tq, std::cout);
    } else if (*train_cmd) {
      train.models = cli::parse_models(models);
      cli::cmd_train(train, std::cout);
    } else if (*eval_cmd) {
      cli::cmd_eval(eval, std::cout);
    } else if (*coef_cmd) {
      cli::cmd_coef(coef, std::cout);
    } else if (*serve_cmd) {
      geotile::MockTileServer server(serve_root);
      std::cout << "serving " << serve_root << " at http://127.0.0.1:" << serve_port << "/tiles/{quadkey}.png"
                << std::endl;
      server.serve_forever(serve_port);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::exit_code_for(e);
  }
  return cli::kOk;
}
