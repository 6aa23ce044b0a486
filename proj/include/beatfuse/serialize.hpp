#pragma once

// Parameter serialization: a plain-text key/value manifest plus one
// little-endian float64 flat payload per module, in the declared tensor
// order (layers ascending; forward then backward direction; w_in, w_rec,
// bias row-major; then head weight and bias). Round trips are bit-exact.

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "beatfuse/common.hpp"
#include "beatfuse/ensemble.hpp"

namespace beatfuse {

inline constexpr int kBundleFormatVersion = 1;

using Manifest = std::map<std::string, std::string>;

inline void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path);
  if (!out) throw data_error("manifest: cannot write " + path.string());
  for (const auto& [key, value] : manifest) out << key << '=' << value << '\n';
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("manifest: cannot open " + path.string());
  Manifest manifest;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw data_error("manifest: malformed line in " + path.string() + ": " + line);
    manifest[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return manifest;
}

inline const std::string& manifest_get(const Manifest& m, const std::string& key) {
  const auto it = m.find(key);
  if (it == m.end()) throw data_error("manifest: missing key " + key);
  return it->second;
}

namespace detail {

inline std::string join_ints(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

inline std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

}  // namespace detail

inline void stack_to_manifest(Manifest& m, const std::string& prefix, const BlstmStack& stack) {
  m[prefix + ".input_dim"] = std::to_string(stack.input_dim());
  m[prefix + ".hidden_dims"] = detail::join_ints(stack.hidden_dims());
  m[prefix + ".output_dim"] = std::to_string(stack.output_dim());
  m[prefix + ".output_kind"] = to_string(stack.output_kind);
}

// Allocates a zeroed stack with the shapes declared under prefix.
inline BlstmStack stack_shape_from_manifest(const Manifest& m, const std::string& prefix) {
  const int input_dim = std::stoi(manifest_get(m, prefix + ".input_dim"));
  const std::vector<int> hidden = detail::split_ints(manifest_get(m, prefix + ".hidden_dims"));
  const int output_dim = std::stoi(manifest_get(m, prefix + ".output_dim"));
  const OutputKind kind = output_kind_from_string(manifest_get(m, prefix + ".output_kind"));
  BlstmStack stack = make_blstm_stack(input_dim, hidden, output_dim, kind, 0);
  for_each_tensor(stack, [](auto& t) { t.setZero(); });
  return stack;
}

namespace detail {

inline void write_doubles(std::ostream& out, const double* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
}

inline void read_doubles(std::istream& in, double* data, std::size_t count) {
  if (!in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 8)))
    throw data_error("payload: truncated file");
}

}  // namespace detail

inline void write_stack_payload(const std::filesystem::path& path, const BlstmStack& stack) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("payload: cannot write " + path.string());
  std::vector<double> buf;
  for_each_tensor(stack, [&](const auto& tensor) {
    buf.clear();
    buf.reserve(tensor.size());
    for (Eigen::Index r = 0; r < tensor.rows(); ++r)
      for (Eigen::Index c = 0; c < tensor.cols(); ++c) buf.push_back(tensor(r, c));
    detail::write_doubles(out, buf.data(), buf.size());
  });
  if (!out) throw data_error("payload: short write on " + path.string());
}

inline void read_stack_payload(const std::filesystem::path& path, BlstmStack& stack) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("payload: cannot open " + path.string());
  std::vector<double> buf;
  for_each_tensor(stack, [&](auto& tensor) {
    buf.resize(tensor.size());
    detail::read_doubles(in, buf.data(), buf.size());
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < tensor.rows(); ++r)
      for (Eigen::Index c = 0; c < tensor.cols(); ++c) tensor(r, c) = buf[i++];
  });
  char extra;
  if (in.read(&extra, 1)) throw data_error("payload: trailing bytes in " + path.string());
}

// ---------------------------------------------------------------------------
// Model bundles: one directory, one manifest, one payload per module.

inline void save_bundle(const std::filesystem::path& dir, const EnsembleParams& params,
                        Manifest extra = {}) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw data_error("bundle: cannot create " + dir.string());

  Manifest m = std::move(extra);
  m["format_version"] = std::to_string(kBundleFormatVersion);
  m["variant"] = to_string(params.variant);
  stack_to_manifest(m, "tracker_mix", params.tracker_mix);
  write_stack_payload(dir / "tracker_mix.f64", params.tracker_mix);
  if (params.separator) {
    stack_to_manifest(m, "separator", *params.separator);
    write_stack_payload(dir / "separator.f64", *params.separator);
  }
  if (params.tracker_drum) {
    stack_to_manifest(m, "tracker_drum", *params.tracker_drum);
    write_stack_payload(dir / "tracker_drum.f64", *params.tracker_drum);
  }
  if (params.tracker_nodrum) {
    stack_to_manifest(m, "tracker_nodrum", *params.tracker_nodrum);
    write_stack_payload(dir / "tracker_nodrum.f64", *params.tracker_nodrum);
  }
  if (params.fuser) {
    stack_to_manifest(m, "fuser", *params.fuser);
    write_stack_payload(dir / "fuser.f64", *params.fuser);
  }
  write_manifest(dir / "manifest.txt", m);
}

struct LoadedBundle {
  EnsembleParams params;
  Manifest manifest;
};

inline LoadedBundle load_bundle(const std::filesystem::path& dir) {
  LoadedBundle bundle;
  bundle.manifest = read_manifest(dir / "manifest.txt");
  const int version = std::stoi(manifest_get(bundle.manifest, "format_version"));
  if (version != kBundleFormatVersion)
    throw data_error("bundle: unsupported format version " + std::to_string(version));
  bundle.params.variant = variant_from_string(manifest_get(bundle.manifest, "variant"));

  bundle.params.tracker_mix = stack_shape_from_manifest(bundle.manifest, "tracker_mix");
  read_stack_payload(dir / "tracker_mix.f64", bundle.params.tracker_mix);
  auto load_optional = [&](const char* prefix, const char* file,
                           std::optional<BlstmStack>& into) {
    if (!bundle.manifest.count(std::string(prefix) + ".input_dim")) return;
    into = stack_shape_from_manifest(bundle.manifest, prefix);
    read_stack_payload(dir / file, *into);
  };
  load_optional("separator", "separator.f64", bundle.params.separator);
  load_optional("tracker_drum", "tracker_drum.f64", bundle.params.tracker_drum);
  load_optional("tracker_nodrum", "tracker_nodrum.f64", bundle.params.tracker_nodrum);
  load_optional("fuser", "fuser.f64", bundle.params.fuser);
  return bundle;
}

// ---------------------------------------------------------------------------
// Optimizer checkpoints (flat float64 payloads next to the bundle).

inline void save_optimizer_state(const std::filesystem::path& path, const Optimizer& opt) {
  const std::vector<double> flat = opt.export_state();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("optimizer checkpoint: cannot write " + path.string());
  detail::write_doubles(out, flat.data(), flat.size());
}

inline void load_optimizer_state(const std::filesystem::path& path, Optimizer& opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("optimizer checkpoint: cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const std::size_t bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  if (bytes % 8 != 0) throw data_error("optimizer checkpoint: bad size");
  std::vector<double> flat(bytes / 8);
  detail::read_doubles(in, flat.data(), flat.size());
  opt.import_state(flat);
}

}  // namespace beatfuse
