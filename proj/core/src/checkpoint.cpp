#include "stpd/stpdnet.hpp"

#include <json.hpp>

#include <fstream>
#include <functional>
#include <sstream>

namespace stpd {

namespace {

constexpr int kFormatVersion = 1;

template <typename Real>
struct NamedBn
{
  std::string name;
  ad::BatchNormState<Real> *bn;
};

std::string strip_suffix(std::string const &name, std::string const &suffix)
{
  return name.substr(0, name.size() - suffix.size());
}

template <typename Real>
std::vector<NamedBn<Real>> named_batch_norms(NetworkParams<Real> &p)
{
  std::vector<NamedBn<Real>> out;
  for (auto *bn : p.batch_norms()) { out.push_back({strip_suffix(bn->gamma.name, ".gamma"), bn}); }
  return out;
}

/// Every stored tensor of `p` in a fixed order.
template <typename Real>
void for_each_tensor(NetworkParams<Real> &p, std::function<void(std::string const &, Tensor<Real> &)> const &fn)
{
  for (auto *param : p.parameters()) { fn(param->name, param->value); }
  for (auto &[name, bn] : named_batch_norms(p)) {
    fn(name + ".running_mean", bn->running_mean);
    fn(name + ".running_var", bn->running_var);
  }
}

std::vector<std::string> net_names(NetworkConfig const &c)
{
  std::vector<std::string> out;
  for (std::size_t k = 0; k < c.n_blocks; ++k) {
    out.push_back("block" + std::to_string(k) + ".dual");
    out.push_back("block" + std::to_string(k) + ".primal");
  }
  return out;
}

std::vector<std::string> correction_names(NetworkConfig const &c)
{
  std::vector<std::string> out;
  if (!c.correction) { return out; }
  for (std::size_t k = 0; k < c.n_blocks; ++k) {
    out.push_back("block" + std::to_string(k) + ".corr_fwd");
    out.push_back("block" + std::to_string(k) + ".corr_adj");
  }
  return out;
}

nlohmann::json read_manifest(std::filesystem::path const &dir)
{
  auto const path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) { throw IoError("cannot open " + path.string()); }
  try {
    return nlohmann::json::parse(in);
  } catch (nlohmann::json::exception const &e) {
    throw IoError("corrupt manifest " + path.string() + ": " + e.what());
  }
}

[[noreturn]] void incompatible(std::string const &why)
{
  throw ParameterError("incompatible checkpoint: " + why);
}

} // namespace

template <typename Real>
void save_params(NetworkParams<Real> const &params, std::filesystem::path const &dir)
{
  auto &p = const_cast<NetworkParams<Real> &>(params);
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json m;
  m["format_version"] = kFormatVersion;
  m["dtype"] = dtype_of<Real>() == DType::Float32 ? "float32" : "float64";
  m["config"] = nlohmann::ordered_json::parse(params.config.to_json());
  m["nets"] = net_names(params.config);
  m["corrections"] = correction_names(params.config);
  nlohmann::ordered_json bns = nlohmann::ordered_json::object();
  for (auto &[name, bn] : named_batch_norms(p)) {
    bns[name] = {{"batches_tracked", bn->batches_tracked}, {"momentum", bn->momentum}, {"eps", bn->eps}};
  }
  m["batch_norm"] = bns;
  nlohmann::ordered_json files = nlohmann::ordered_json::object();
  for_each_tensor<Real>(p, [&](std::string const &name, Tensor<Real> &t) {
    std::string const file = name + ".stp";
    write_tensor(t, dir / file);
    files[name] = file;
  });
  m["tensors"] = files;
  std::ofstream out(dir / "manifest.json");
  if (!out) { throw IoError("cannot write " + (dir / "manifest.json").string()); }
  out << m.dump(2) << '\n';
}

NetworkConfig read_checkpoint_config(std::filesystem::path const &dir)
{
  auto const m = read_manifest(dir);
  if (!m.contains("format_version") || m["format_version"] != kFormatVersion) {
    incompatible("unsupported format version");
  }
  if (!m.contains("config")) { incompatible("manifest has no config"); }
  try {
    return NetworkConfig::from_json(m["config"].dump());
  } catch (ParameterError const &e) {
    incompatible(e.what());
  }
}

template <typename Real>
NetworkParams<Real> load_params(std::filesystem::path const &dir)
{
  auto const cfg = read_checkpoint_config(dir);
  auto const m = read_manifest(dir);
  if (m.value("nets", nlohmann::json::array()) != nlohmann::json(net_names(cfg))) {
    incompatible("net list does not match the config");
  }
  if (m.value("corrections", nlohmann::json::array()) != nlohmann::json(correction_names(cfg))) {
    incompatible("correction list does not match the config");
  }
  auto const &files = m.at("tensors");
  auto params = init_network<Real>(cfg, 0);
  std::size_t expected = 0;
  for_each_tensor<Real>(params, [&](std::string const &name, Tensor<Real> &t) {
    ++expected;
    if (!files.contains(name)) { incompatible("missing tensor " + name); }
    auto loaded = read_tensor<Real>(dir / files[name].get<std::string>());
    if (loaded.shape() != t.shape()) {
      incompatible(name + " has shape " + shape_string(loaded.shape()) + ", config implies " +
                   shape_string(t.shape()));
    }
    t = std::move(loaded);
  });
  if (files.size() != expected) { incompatible("manifest lists tensors the config does not produce"); }
  auto const &bns = m.at("batch_norm");
  for (auto &[name, bn] : named_batch_norms(params)) {
    if (!bns.contains(name)) { incompatible("missing batch norm state " + name); }
    bn->batches_tracked = bns[name].at("batches_tracked").template get<std::size_t>();
    bn->momentum = bns[name].at("momentum").template get<double>();
    bn->eps = bns[name].at("eps").template get<double>();
  }
  for (auto *p : params.parameters()) { p->grad = Tensor<Real>(p->value.shape()); }
  return params;
}

template <typename Real>
NetworkParams<Real> load_params(std::filesystem::path const &dir, NetworkConfig const &expected)
{
  auto const cfg = read_checkpoint_config(dir);
  if (!(cfg == expected)) { incompatible("stored config differs from the requested one"); }
  return load_params<Real>(dir);
}

template void save_params(NetworkParams<float> const &, std::filesystem::path const &);
template void save_params(NetworkParams<double> const &, std::filesystem::path const &);
template NetworkParams<float> load_params(std::filesystem::path const &);
template NetworkParams<double> load_params(std::filesystem::path const &);
template NetworkParams<float> load_params(std::filesystem::path const &, NetworkConfig const &);
template NetworkParams<double> load_params(std::filesystem::path const &, NetworkConfig const &);

} // namespace stpd
