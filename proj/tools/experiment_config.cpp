#include "experiment_config.hpp"

#include <toml.hpp>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace stpd::cli {

namespace {

class Section
{
public:
  Section(toml::table const *table, std::string name)
    : table_(table)
    , name_(std::move(name))
  {
  }

  void read(char const *key, std::size_t &out)
  {
    if (auto const *n = find(key)) {
      auto const v = n->value<std::int64_t>();
      if (!n->is_integer() || !v || *v < 0) { fail(key, "a non-negative integer"); }
      out = static_cast<std::size_t>(*v);
    }
  }
  void read(char const *key, double &out)
  {
    if (auto const *n = find(key)) {
      if (!n->is_number()) { fail(key, "a number"); }
      out = *n->value<double>();
    }
  }
  void read(char const *key, std::optional<double> &out)
  {
    if (find(key)) {
      double v = 0;
      read(key, v);
      out = v;
    }
  }
  void read(char const *key, bool &out)
  {
    if (auto const *n = find(key)) {
      if (!n->is_boolean()) { fail(key, "true or false"); }
      out = *n->value<bool>();
    }
  }
  void read(char const *key, std::string &out)
  {
    if (auto const *n = find(key)) {
      if (!n->is_string()) { fail(key, "a string"); }
      out = *n->value<std::string>();
    }
  }
  toml::array const *array(char const *key)
  {
    if (auto const *n = find(key)) {
      if (!n->is_array()) { fail(key, "an array"); }
      return n->as_array();
    }
    return nullptr;
  }

  /// Rejects keys that no read() asked for.
  void finish() const
  {
    if (!table_) { return; }
    for (auto const &[k, v] : *table_) {
      if (!seen_.count(std::string(k.str()))) {
        throw ConfigError("unknown key '" + name_ + "." + std::string(k.str()) + "'");
      }
    }
  }

  [[noreturn]] void fail(char const *key, char const *expected) const
  {
    throw ConfigError("'" + name_ + "." + key + "' must be " + expected);
  }

private:
  toml::node const *find(char const *key)
  {
    seen_.insert(key);
    return table_ ? table_->get(key) : nullptr;
  }

  toml::table const *table_;
  std::string name_;
  std::set<std::string> seen_;
};

toml::table const *section_table(toml::table const &root, char const *name)
{
  auto const *n = root.get(name);
  if (!n) { return nullptr; }
  if (!n->is_table()) { throw ConfigError(std::string("'") + name + "' must be a table"); }
  return n->as_table();
}

} // namespace

ProjectorGeometry ExperimentConfig::projector_geometry() const
{
  return ProjectorGeometry(geometry.views, geometry.bins, geometry.image_size, geometry.pixel_size,
                           geometry.bin_spacing, geometry.fov_radius);
}

FrameSchedule ExperimentConfig::frame_schedule() const { return FrameSchedule::from_groups(schedule); }

ScanModel ExperimentConfig::scan_model() const
{
  return ScanModel::interpolated(frame_schedule(), scan.first_counts, scan.last_counts, scan.background_fraction);
}

TrainConfig ExperimentConfig::train_config() const
{
  TrainConfig c;
  c.epochs = train.epochs;
  c.batch_size = train.batch_size;
  c.base_lr = train.base_lr;
  c.lr_decay = train.lr_decay;
  c.seed = train.seed;
  c.checkpoint_every = train.checkpoint_every;
  c.recalibrate_bn = train.recalibrate_bn;
  c.network = network;
  return c;
}

ExperimentConfig ExperimentConfig::parse(std::string const &text, std::string const &source)
{
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (toml::parse_error const &e) {
    std::ostringstream os;
    os << source << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(os.str());
  }
  static std::set<std::string> const known{"geometry", "phantom", "scan", "schedule", "network", "train", "kemst"};
  for (auto const &[k, v] : root) {
    if (!known.count(std::string(k.str()))) { throw ConfigError("unknown section '" + std::string(k.str()) + "'"); }
  }

  ExperimentConfig c;
  {
    Section s(section_table(root, "geometry"), "geometry");
    s.read("views", c.geometry.views);
    s.read("bins", c.geometry.bins);
    s.read("image_size", c.geometry.image_size);
    s.read("pixel_size", c.geometry.pixel_size);
    s.read("bin_spacing", c.geometry.bin_spacing);
    s.read("fov_radius", c.geometry.fov_radius);
    s.finish();
  }
  {
    Section s(section_table(root, "phantom"), "phantom");
    s.read("n_slices", c.phantom.n_slices);
    s.read("variability", c.phantom.variability);
    s.finish();
  }
  {
    Section s(section_table(root, "scan"), "scan");
    s.read("first_counts", c.scan.first_counts);
    s.read("last_counts", c.scan.last_counts);
    s.read("background_fraction", c.scan.background_fraction);
    s.finish();
  }
  {
    Section s(section_table(root, "schedule"), "schedule");
    if (auto const *groups = s.array("groups")) {
      c.schedule.clear();
      for (auto const &g : *groups) {
        auto const *pair = g.as_array();
        if (!pair || pair->size() != 2 || !(*pair)[0].is_integer() || !(*pair)[1].is_number() ||
            *(*pair)[0].value<std::int64_t>() < 1) {
          s.fail("groups", "a list of [frame count, duration in seconds] pairs");
        }
        c.schedule.emplace_back(static_cast<std::size_t>(*(*pair)[0].value<std::int64_t>()),
                                *(*pair)[1].value<double>());
      }
    }
    s.finish();
  }
  {
    Section s(section_table(root, "network"), "network");
    s.read("n_blocks", c.network.n_blocks);
    s.read("n_primal", c.network.n_primal);
    s.read("n_dual", c.network.n_dual);
    s.read("hidden", c.network.hidden);
    s.read("depth", c.network.depth);
    s.read("temporal_extent", c.network.temporal_extent);
    s.read("correction", c.network.correction);
    s.read("primal_projected", c.network.primal_projected);
    s.read("dual_projected", c.network.dual_projected);
    s.read("final_bn_gamma", c.network.final_bn_gamma);
    s.finish();
  }
  {
    Section s(section_table(root, "train"), "train");
    s.read("epochs", c.train.epochs);
    s.read("batch_size", c.train.batch_size);
    s.read("base_lr", c.train.base_lr);
    s.read("lr_decay", c.train.lr_decay);
    std::size_t seed = c.train.seed;
    s.read("seed", seed);
    c.train.seed = seed;
    s.read("checkpoint_every", c.train.checkpoint_every);
    s.read("validation_slices", c.train.validation_slices);
    s.read("recalibrate_bn", c.train.recalibrate_bn);
    s.finish();
  }
  {
    Section s(section_table(root, "kemst"), "kemst");
    s.read("k_neighbors", c.kemst.kernel.k_neighbors);
    s.read("window", c.kemst.kernel.window);
    s.read("search_radius", c.kemst.kernel.search_radius);
    std::string sigma = c.kemst.kernel.sigma_mode == SigmaMode::LocalMean ? "local" : "global";
    s.read("sigma_mode", sigma);
    if (sigma == "local") {
      c.kemst.kernel.sigma_mode = SigmaMode::LocalMean;
    } else if (sigma == "global") {
      c.kemst.kernel.sigma_mode = SigmaMode::GlobalMean;
    } else {
      s.fail("sigma_mode", "\"local\" or \"global\"");
    }
    s.read("iters", c.kemst.iters);
    s.read("composite_groups", c.kemst.composite_groups);
    s.read("composite_iters", c.kemst.composite_iters);
    s.finish();
  }

  // surface range errors as config errors
  try {
    c.projector_geometry();
    c.frame_schedule();
    c.scan_model().validate(c.frame_schedule().size());
    c.train_config().validate();
    if (c.phantom.n_slices < 1) { throw ParameterError("phantom.n_slices must be >= 1"); }
    if (c.phantom.variability < 0) { throw ParameterError("phantom.variability must be >= 0"); }
  } catch (ConfigError const &) {
    throw;
  } catch (ParameterError const &e) {
    throw ConfigError(source + ": " + e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(std::filesystem::path const &path)
{
  std::ifstream in(path);
  if (!in) { throw IoError("cannot open config " + path.string()); }
  std::ostringstream os;
  os << in.rdbuf();
  return parse(os.str(), path.string());
}

std::string ExperimentConfig::to_toml() const
{
  toml::table geo{{"views", static_cast<std::int64_t>(geometry.views)},
                  {"bins", static_cast<std::int64_t>(geometry.bins)},
                  {"image_size", static_cast<std::int64_t>(geometry.image_size)},
                  {"pixel_size", geometry.pixel_size},
                  {"bin_spacing", geometry.bin_spacing}};
  if (geometry.fov_radius) { geo.insert("fov_radius", *geometry.fov_radius); }
  toml::array groups;
  for (auto const &[n, d] : schedule) { groups.push_back(toml::array{static_cast<std::int64_t>(n), d}); }
  toml::table root{
    {"geometry", geo},
    {"phantom",
     toml::table{{"n_slices", static_cast<std::int64_t>(phantom.n_slices)}, {"variability", phantom.variability}}},
    {"scan",
     toml::table{{"first_counts", scan.first_counts},
                 {"last_counts", scan.last_counts},
                 {"background_fraction", scan.background_fraction}}},
    {"schedule", toml::table{{"groups", groups}}},
    {"network",
     toml::table{{"n_blocks", static_cast<std::int64_t>(network.n_blocks)},
                 {"n_primal", static_cast<std::int64_t>(network.n_primal)},
                 {"n_dual", static_cast<std::int64_t>(network.n_dual)},
                 {"hidden", static_cast<std::int64_t>(network.hidden)},
                 {"depth", static_cast<std::int64_t>(network.depth)},
                 {"temporal_extent", static_cast<std::int64_t>(network.temporal_extent)},
                 {"correction", network.correction},
                 {"primal_projected", static_cast<std::int64_t>(network.primal_projected)},
                 {"dual_projected", static_cast<std::int64_t>(network.dual_projected)},
                 {"final_bn_gamma", network.final_bn_gamma}}},
    {"train",
     toml::table{{"epochs", static_cast<std::int64_t>(train.epochs)},
                 {"batch_size", static_cast<std::int64_t>(train.batch_size)},
                 {"base_lr", train.base_lr},
                 {"lr_decay", train.lr_decay},
                 {"seed", static_cast<std::int64_t>(train.seed)},
                 {"checkpoint_every", static_cast<std::int64_t>(train.checkpoint_every)},
                 {"validation_slices", static_cast<std::int64_t>(train.validation_slices)},
                 {"recalibrate_bn", train.recalibrate_bn}}},
    {"kemst",
     toml::table{{"k_neighbors", static_cast<std::int64_t>(kemst.kernel.k_neighbors)},
                 {"window", static_cast<std::int64_t>(kemst.kernel.window)},
                 {"search_radius", static_cast<std::int64_t>(kemst.kernel.search_radius)},
                 {"sigma_mode", kemst.kernel.sigma_mode == SigmaMode::LocalMean ? "local" : "global"},
                 {"iters", static_cast<std::int64_t>(kemst.iters)},
                 {"composite_groups", static_cast<std::int64_t>(kemst.composite_groups)},
                 {"composite_iters", static_cast<std::int64_t>(kemst.composite_iters)}}},
  };
  std::ostringstream os;
  os << root << '\n';
  return os.str();
}

} // namespace stpd::cli
