// Copyright 2026 The duplexrf Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "duplex/assets.hpp"

#include "duplex/binary_io.hpp"

#include <fmt/format.h>
#include <zlib.h>

#include <map>

namespace duplex {

namespace {

constexpr char kMagic[] = "DXFBNDL1";
constexpr std::size_t kNameWidth = 32;
constexpr std::size_t kTocEntry = kNameWidth + 8 + 8 + 4 + 4;
constexpr std::size_t kAlign = 16;

using json = nlohmann::json;

struct Section {
  std::string name;
  std::vector<std::uint8_t> bytes;
};

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

std::vector<std::uint8_t> f32_bytes(std::span<const double> v) {
  ByteWriter w;
  for (double x : v) w.f32(static_cast<float>(x));
  return std::move(w.bytes());
}

std::vector<double> read_f32(std::span<const std::uint8_t> bytes, const std::string& what) {
  if (bytes.size() % 4) fail_data(fmt::format("{}: length not a multiple of 4", what));
  ByteReader r(bytes, what);
  std::vector<double> out(bytes.size() / 4);
  for (double& v : out) v = r.f32();
  return out;
}

json bounds_json(const Aabb& b) {
  return {{"lo", {b.lo.x(), b.lo.y(), b.lo.z()}}, {"hi", {b.hi.x(), b.hi.y(), b.hi.z()}}};
}

Aabb bounds_from_json(const json& j) {
  Aabb b;
  for (int a = 0; a < 3; ++a) {
    b.lo[a] = j.at("lo").at(a).get<double>();
    b.hi[a] = j.at("hi").at(a).get<double>();
  }
  return b;
}

}  // namespace

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes a 32-bit length; feed large buffers in pieces.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = crc32(crc, bytes.data() + pos, n);
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

DuplexModel bake_to_float(const DuplexModel& model) {
  DuplexModel m = model;
  for (auto& l : m.geometry.layers) {
    for (auto& v : l.mesh.vertices)
      for (int a = 0; a < 3; ++a) v[a] = to_f32(v[a]);
    for (double& f : l.features) f = to_f32(f);
  }
  for (auto& l : m.net.layers) {
    for (double& w : l.weights) w = to_f32(w);
    for (double& b : l.bias) b = to_f32(b);
  }
  return m;
}

PackedConv pack_conv_weights(const ConvLayer& layer) {
  if (layer.kh != 2 || layer.kw != 2)
    fail_usage(fmt::format("pack_conv_weights: only 2x2 kernels can be packed (got {}x{})", layer.kh, layer.kw));
  PackedConv p;
  p.out_ch = layer.out_ch;
  p.in_ch = layer.in_ch;
  p.texels.resize(static_cast<std::size_t>(layer.out_ch) * layer.in_ch * 4);
  for (int o = 0; o < layer.out_ch; ++o)
    for (int i = 0; i < layer.in_ch; ++i) {
      double* t = p.texels.data() + p.texel_index(o, i);
      t[0] = layer.w(o, i, 0, 0);
      t[1] = layer.w(o, i, 0, 1);
      t[2] = layer.w(o, i, 1, 0);
      t[3] = layer.w(o, i, 1, 1);
    }
  p.bias_row.assign(static_cast<std::size_t>((layer.out_ch + 3) / 4) * 4, 0.0);
  std::copy(layer.bias.begin(), layer.bias.end(), p.bias_row.begin());
  return p;
}

ConvLayer unpack_conv_weights(const PackedConv& p, Activation activation) {
  if (p.texels.size() != static_cast<std::size_t>(p.out_ch) * p.in_ch * 4 ||
      p.bias_row.size() != static_cast<std::size_t>((p.out_ch + 3) / 4) * 4)
    fail_data("unpack_conv_weights: block size does not match its channel counts");
  ConvLayer layer(p.in_ch, p.out_ch, 2, activation);
  for (int o = 0; o < p.out_ch; ++o)
    for (int i = 0; i < p.in_ch; ++i) {
      const double* t = p.texels.data() + p.texel_index(o, i);
      layer.w(o, i, 0, 0) = t[0];
      layer.w(o, i, 0, 1) = t[1];
      layer.w(o, i, 1, 0) = t[2];
      layer.w(o, i, 1, 1) = t[3];
    }
  std::copy_n(p.bias_row.begin(), p.out_ch, layer.bias.begin());
  return layer;
}

json make_manifest(const DuplexModel& model, const BundleInfo& info) {
  const auto& L = model.net.layout;
  json groups = json::array();
  for (const auto& g : L.groups()) groups.push_back({{"name", g.name}, {"offset", g.offset}, {"count", g.count}});
  json layers = json::array();
  for (const auto& l : model.net.layers)
    layers.push_back({{"in_channels", l.in_ch},
                      {"out_channels", l.out_ch},
                      {"kernel", {l.kh, l.kw}},
                      {"activation", activation_name(l.activation)},
                      {"packed", l.kh == 2 && l.kw == 2}});
  json meshes = json::array();
  for (const auto& l : model.geometry.layers)
    meshes.push_back({{"vertices", l.mesh.vertices.size()}, {"triangles", l.mesh.triangles.size()}});

  json m;
  m["format"] = "duplex-bundle";
  m["format_version"] = kBundleVersion;
  m["layer_count"] = model.geometry.layer_count();
  m["layer_order"] = "outer-first";
  m["feature_dim"] = L.feature_dim;
  m["thresholds"] = model.geometry.thresholds;
  m["meshes"] = meshes;
  m["background"] = {model.background.x(), model.background.y(), model.background.z()};
  m["net"] = {{"preset", model.net.preset},
              {"layers", layers},
              {"footprint", "forward-offset"},
              {"padding", "zero"},
              {"packed_tap_order", {"(0,0)", "(1,0)", "(0,1)", "(1,1)"}}};
  m["input"] = {{"channels", L.channels()},
                {"groups", groups},
                {"pe_view_levels", L.pe_view_levels},
                {"pe_pos_levels", L.pe_pos_levels},
                {"use_positions", L.use_positions},
                {"position_bounds", bounds_json(L.position_bounds)},
                {"encoding", "[v, sin(2^k v), cos(2^k v) for k < L], no pi factor"}};
  json prov = {{"scene_hash", info.scene_hash}, {"config_hash", info.config_hash}, {"n_steps", info.n_steps}};
  m["provenance"] = prov;
  json cam = {{"camera_angle_x", info.camera_angle_x}, {"width", info.width}, {"height", info.height}};
  if (info.pose_bounds) {
    const auto& b = *info.pose_bounds;
    cam["pose_bounds"] = {{"r", {b.r_min, b.r_max}}, {"theta", {b.theta_min, b.theta_max}}, {"phi", {b.phi_min, b.phi_max}}};
  }
  m["camera"] = cam;
  return m;
}

std::vector<std::uint8_t> encode_bundle(const DuplexModel& input, const BundleInfo& info) {
  input.validate();
  const DuplexModel model = bake_to_float(input);
  std::vector<Section> sections;
  const json manifest = make_manifest(model, info);
  const std::string text = manifest.dump(2);
  sections.push_back({"manifest", {text.begin(), text.end()}});
  for (std::size_t l = 0; l < model.geometry.layer_count(); ++l) {
    const auto& fm = model.geometry.layers[l];
    std::vector<double> pos;
    pos.reserve(fm.mesh.vertices.size() * 3);
    for (const auto& v : fm.mesh.vertices) pos.insert(pos.end(), {v.x(), v.y(), v.z()});
    sections.push_back({fmt::format("layer.{}.positions", l), f32_bytes(pos)});
    ByteWriter tri;
    for (const auto& t : fm.mesh.triangles)
      for (auto i : t) tri.u32(i);
    sections.push_back({fmt::format("layer.{}.triangles", l), std::move(tri.bytes())});
    sections.push_back({fmt::format("layer.{}.features", l), f32_bytes(fm.features)});
  }
  for (std::size_t i = 0; i < model.net.layers.size(); ++i) {
    const auto& layer = model.net.layers[i];
    sections.push_back({fmt::format("net.{}.weights", i), f32_bytes(layer.weights)});
    sections.push_back({fmt::format("net.{}.bias", i), f32_bytes(layer.bias)});
    if (layer.kh == 2 && layer.kw == 2) {
      const PackedConv p = pack_conv_weights(layer);
      std::vector<double> all = p.texels;
      all.insert(all.end(), p.bias_row.begin(), p.bias_row.end());
      sections.push_back({fmt::format("net.{}.packed", i), f32_bytes(all)});
    }
  }

  const auto align = [](std::size_t v) { return (v + kAlign - 1) / kAlign * kAlign; };
  ByteWriter out;
  out.raw(std::string_view(kMagic, 8));
  out.u32(kBundleVersion);
  out.u32(static_cast<std::uint32_t>(sections.size()));
  std::size_t offset = align(16 + kTocEntry * sections.size());
  for (const auto& s : sections) {
    if (s.name.size() >= kNameWidth) fail_usage("bundle: section name too long");
    out.fixed_string(s.name, kNameWidth);
    out.u64(offset);
    out.u64(s.bytes.size());
    out.u32(crc32_of(s.bytes));
    out.u32(0);
    offset = align(offset + s.bytes.size());
  }
  for (const auto& s : sections) {
    while (out.size() % kAlign) out.u8(0);
    out.raw(s.bytes);
  }
  while (out.size() % kAlign) out.u8(0);
  return std::move(out.bytes());
}

Bundle decode_bundle(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader in(bytes, context);
  if (in.take(8).size() != 8 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    fail_data(fmt::format("{}: not a bundle (bad magic)", context));
  const auto version = in.u32();
  if (version != kBundleVersion)
    fail_data(fmt::format("{}: unsupported bundle version {} (expected {})", context, version, kBundleVersion));
  const auto count = in.u32();
  if (count > 4096 || count * kTocEntry > in.remaining()) fail_data(fmt::format("{}: truncated table of contents", context));
  std::map<std::string, std::span<const std::uint8_t>> sections;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = in.fixed_string(kNameWidth);
    const auto offset = in.u64();
    const auto length = in.u64();
    const auto crc = in.u32();
    in.u32();
    if (offset > bytes.size() || length > bytes.size() - offset)
      fail_data(fmt::format("{}: section '{}' is truncated", context, name));
    const auto data = bytes.subspan(offset, length);
    if (crc32_of(data) != crc) fail_data(fmt::format("{}: checksum mismatch in section '{}'", context, name));
    if (!sections.emplace(name, data).second) fail_data(fmt::format("{}: duplicate section '{}'", context, name));
  }
  const auto section = [&](const std::string& name) {
    auto it = sections.find(name);
    if (it == sections.end()) fail_data(fmt::format("{}: missing section '{}'", context, name));
    return it->second;
  };

  Bundle b;
  try {
    const auto text = section("manifest");
    b.manifest = json::parse(text.begin(), text.end());
    const json& m = b.manifest;
    if (m.at("format_version").get<std::uint32_t>() != kBundleVersion)
      fail_data(fmt::format("{}: manifest version mismatch", context));
    const auto layers = m.at("layer_count").get<std::size_t>();
    const int f = m.at("feature_dim").get<int>();
    b.model.geometry.thresholds = m.at("thresholds").get<std::vector<double>>();
    const auto& bg = m.at("background");
    b.model.background = Vec3(bg.at(0).get<double>(), bg.at(1).get<double>(), bg.at(2).get<double>());
    for (std::size_t l = 0; l < layers; ++l) {
      FeatureMesh fm;
      fm.feature_dim = f;
      const auto pos = read_f32(section(fmt::format("layer.{}.positions", l)), "positions");
      if (pos.size() % 3) fail_data(fmt::format("{}: layer {} positions not xyz triples", context, l));
      for (std::size_t v = 0; v < pos.size(); v += 3) fm.mesh.vertices.emplace_back(pos[v], pos[v + 1], pos[v + 2]);
      const auto tri = section(fmt::format("layer.{}.triangles", l));
      if (tri.size() % 12) fail_data(fmt::format("{}: layer {} triangle section malformed", context, l));
      ByteReader tr(tri, "triangles");
      fm.mesh.triangles.resize(tri.size() / 12);
      for (auto& t : fm.mesh.triangles)
        for (auto& i : t) i = tr.u32();
      fm.features = read_f32(section(fmt::format("layer.{}.features", l)), "features");
      fm.validate();
      b.model.geometry.layers.push_back(std::move(fm));
    }

    const auto& net = m.at("net");
    const auto& input = m.at("input");
    b.model.net.preset = net.at("preset").get<std::string>();
    auto& L = b.model.net.layout;
    L.layer_count = static_cast<int>(layers);
    L.feature_dim = f;
    L.pe_view_levels = input.at("pe_view_levels").get<int>();
    L.pe_pos_levels = input.at("pe_pos_levels").get<int>();
    L.use_positions = input.at("use_positions").get<bool>();
    L.position_bounds = bounds_from_json(input.at("position_bounds"));
    if (input.at("channels").get<int>() != L.channels())
      fail_data(fmt::format("{}: manifest channel count disagrees with its layout", context));
    const auto& nl = net.at("layers");
    for (std::size_t i = 0; i < nl.size(); ++i) {
      ConvLayer layer;
      layer.in_ch = nl[i].at("in_channels").get<int>();
      layer.out_ch = nl[i].at("out_channels").get<int>();
      layer.kh = nl[i].at("kernel").at(0).get<int>();
      layer.kw = nl[i].at("kernel").at(1).get<int>();
      layer.activation = activation_from_name(nl[i].at("activation").get<std::string>());
      layer.weights = read_f32(section(fmt::format("net.{}.weights", i)), "weights");
      layer.bias = read_f32(section(fmt::format("net.{}.bias", i)), "bias");
      layer.validate();
      if (layer.kh == 2 && layer.kw == 2) {
        // The packed block must agree with the canonical weights.
        const auto packed = read_f32(section(fmt::format("net.{}.packed", i)), "packed");
        const PackedConv p = pack_conv_weights(layer);
        std::vector<double> expect = p.texels;
        expect.insert(expect.end(), p.bias_row.begin(), p.bias_row.end());
        if (packed != expect) fail_data(fmt::format("{}: packed weights of layer {} disagree", context, i));
      }
      b.model.net.layers.push_back(std::move(layer));
    }

    const auto& prov = m.at("provenance");
    b.info.scene_hash = prov.at("scene_hash").get<std::string>();
    b.info.config_hash = prov.at("config_hash").get<std::string>();
    b.info.n_steps = prov.at("n_steps").get<int>();
    const auto& cam = m.at("camera");
    b.info.camera_angle_x = cam.at("camera_angle_x").get<double>();
    b.info.width = cam.at("width").get<int>();
    b.info.height = cam.at("height").get<int>();
    if (cam.contains("pose_bounds")) {
      const auto& pb = cam.at("pose_bounds");
      b.info.pose_bounds = PoseBounds{pb.at("r").at(0).get<double>(),     pb.at("r").at(1).get<double>(),
                                      pb.at("theta").at(0).get<double>(), pb.at("theta").at(1).get<double>(),
                                      pb.at("phi").at(0).get<double>(),   pb.at("phi").at(1).get<double>()};
    }
  } catch (const json::exception& e) {
    fail_data(fmt::format("{}: malformed manifest: {}", context, e.what()));
  }
  b.model.validate();
  return b;
}

void export_bundle(const DuplexModel& model, const BundleInfo& info, const std::filesystem::path& path) {
  write_file(path, encode_bundle(model, info));
}

Bundle import_bundle(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_bundle(bytes, path.string());
}

}  // namespace duplex
