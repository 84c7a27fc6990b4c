#include "rieszlab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <numeric>

#include <json.hpp>

namespace rieszlab {

namespace {

constexpr int kCoreRadius = 2;  // r_K

int cube_side(const EndSpec& s) { return 2 * s.R + 1; }

int64_t fragment_size(const EndSpec& s) {
  int64_t v = 1;
  for (int d = 0; d < s.n; ++d) v *= cube_side(s);
  return v * s.compact_size();
}

// Decode a fragment lexicographic index into lattice + cycle coordinates.
void decode(const EndSpec& s, int64_t idx, int32_t* out) {
  const int nc = static_cast<int>(s.factor.size());
  for (int c = nc - 1; c >= 0; --c) {
    out[s.n + c] = static_cast<int32_t>(idx % s.factor[c]);
    idx /= s.factor[c];
  }
  const int side = cube_side(s);
  for (int d = s.n - 1; d >= 0; --d) {
    out[d] = static_cast<int32_t>(idx % side) - s.R;
    idx /= side;
  }
}

int64_t encode(const EndSpec& s, const int32_t* x) {
  const int side = cube_side(s);
  int64_t idx = 0;
  for (int d = 0; d < s.n; ++d) idx = idx * side + (x[d] + s.R);
  for (size_t c = 0; c < s.factor.size(); ++c) idx = idx * s.factor[c] + x[s.n + c];
  return idx;
}

int linf(const int32_t* x, int n) {
  int m = 0;
  for (int d = 0; d < n; ++d) m = std::max(m, std::abs(x[d]));
  return m;
}

// Neighbours of a lattice point inside its fragment cube (cycles wrap).
template <class F>
void for_each_lattice_neighbour(const EndSpec& s, int32_t* x, F&& f) {
  for (int d = 0; d < s.n; ++d) {
    for (int step : {-1, 1}) {
      const int32_t old = x[d];
      x[d] += step;
      if (std::abs(x[d]) <= s.R) f(x);
      x[d] = old;
    }
  }
  for (size_t c = 0; c < s.factor.size(); ++c) {
    const int m = s.factor[c];
    if (m == 1) continue;
    const int32_t old = x[s.n + c];
    x[s.n + c] = (old + 1) % m;
    f(x);
    if (m > 2) {
      x[s.n + c] = (old + m - 1) % m;
      f(x);
    }
    x[s.n + c] = old;
  }
}

struct CsrBuilder {
  std::vector<std::vector<int32_t>> adj;
  explicit CsrBuilder(int nv) : adj(nv) {}
  void add(int a, int b) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  void finish(ModelManifold& M) {
    M.row_ptr.assign(M.num_vertices + 1, 0);
    for (int v = 0; v < M.num_vertices; ++v) {
      std::sort(adj[v].begin(), adj[v].end());
      M.row_ptr[v + 1] = M.row_ptr[v] + static_cast<int64_t>(adj[v].size());
    }
    M.col.resize(M.row_ptr.back());
    for (int v = 0; v < M.num_vertices; ++v) {
      std::copy(adj[v].begin(), adj[v].end(), M.col.begin() + M.row_ptr[v]);
      std::vector<int32_t>().swap(adj[v]);
    }
    M.weight.assign(M.col.size(), 1.0);
  }
};

const char* kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string b64_encode(const void* data, size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (size_t i = 0; i < len; i += 3) {
    uint32_t v = p[i] << 16;
    if (i + 1 < len) v |= p[i + 1] << 8;
    if (i + 2 < len) v |= p[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += i + 1 < len ? kB64[(v >> 6) & 63] : '=';
    out += i + 2 < len ? kB64[v & 63] : '=';
  }
  return out;
}

std::vector<unsigned char> b64_decode(const std::string& s) {
  int table[256];
  std::fill(table, table + 256, -1);
  for (int i = 0; i < 64; ++i) table[static_cast<unsigned char>(kB64[i])] = i;
  std::vector<unsigned char> out;
  uint32_t buf = 0;
  int bits = 0;
  for (unsigned char c : s) {
    if (c == '=') break;
    if (table[c] < 0) throw GeometryError("invalid base64 payload");
    buf = (buf << 6) | table[c];
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((buf >> bits) & 0xff));
    }
  }
  return out;
}

template <class T>
std::vector<T> b64_array(const std::string& s) {
  auto raw = b64_decode(s);
  if (raw.size() % sizeof(T)) throw GeometryError("base64 array has wrong length");
  std::vector<T> out(raw.size() / sizeof(T));
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

}  // namespace

int EndSpec::compact_size() const {
  int m = 1;
  for (int c : factor) m *= c;
  return m;
}

int EndSpec::total_dim() const {
  int N = n;
  for (int c : factor)
    if (c > 1) ++N;
  return N;
}

int64_t vertex_count_bound(const std::vector<EndSpec>& ends) {
  int64_t nv = 0;
  for (const auto& e : ends) {
    int64_t s = e.compact_size();
    for (int d = 0; d < e.n; ++d) s *= 2 * e.R + 1;
    nv += s;
  }
  return nv;
}

void validate(const EndSpec& s) {
  if (s.n < 3) throw GeometryError("below theorem hypothesis n_i >= 3 (got n=" + std::to_string(s.n) + ")");
  if (s.R < 4) throw GeometryError("R=" + std::to_string(s.R) + " too small to hold cutoff collars (need R >= 4)");
  for (int c : s.factor)
    if (c < 1) throw GeometryError("cycle lengths must be >= 1");
  if (!(s.h > 0)) throw GeometryError("lattice spacing must be positive");
  if (fragment_size(s) > (int64_t{1} << 30)) throw GeometryError("end too large");
}

int ModelManifold::num_interior() const {
  return static_cast<int>(std::count(boundary.begin(), boundary.end(), 0));
}

double ModelManifold::radius(int v) const {
  if (tag[v] == kJunctionTag) return 0.0;
  const int n = ends[tag[v] - 1].n;
  double s = 0;
  for (int d = 0; d < n; ++d) s += double(coord(v)[d]) * coord(v)[d];
  return h * std::sqrt(s);
}

double ModelManifold::radial_distance(int i, int v) const {
  if (fragment) return radius(v);
  const int t = tag[v];
  if (t == i) return radius(v);
  if (t != kJunctionTag) return radius(v) + 2 * h;
  // junction: hub i at 0, centre at h, other hubs at 2h
  if (v == base_points[i - 1]) return 0.0;
  return v == 0 ? h : 2 * h;
}

int64_t ModelManifold::fragment_index(int i, int v) const {
  if (tag[v] != i) return -1;
  return encode(ends[i - 1], coord(v));
}

ModelManifold build_end(const EndSpec& spec) {
  validate(spec);
  ModelManifold M;
  M.ends = {spec};
  M.fragment = true;
  M.h = spec.h;
  const int64_t nv = fragment_size(spec);
  M.num_vertices = static_cast<int>(nv);
  M.coord_stride = spec.n + static_cast<int>(spec.factor.size());
  M.coords.resize(static_cast<size_t>(nv) * M.coord_stride);
  M.tag.assign(nv, 1);
  M.mu.assign(nv, 1.0);
  M.boundary.assign(nv, 0);
  M.core.assign(nv, 0);
  CsrBuilder b(M.num_vertices);
  std::vector<int32_t> x(M.coord_stride);
  for (int64_t v = 0; v < nv; ++v) {
    int32_t* xv = M.coords.data() + v * M.coord_stride;
    decode(spec, v, xv);
    const int r = linf(xv, spec.n);
    M.boundary[v] = r == spec.R;
    M.core[v] = r <= kCoreRadius;
    std::copy(xv, xv + M.coord_stride, x.begin());
    for_each_lattice_neighbour(spec, x.data(), [&](const int32_t* y) {
      const int64_t u = encode(spec, y);
      if (u > v) b.add(static_cast<int>(v), static_cast<int>(u));
    });
  }
  b.finish(M);
  std::vector<int32_t> origin(M.coord_stride, 0);
  M.base_points = {static_cast<int>(encode(spec, origin.data()))};
  M.frag_to_vertex.resize(1);
  M.frag_to_vertex[0].resize(nv);
  std::iota(M.frag_to_vertex[0].begin(), M.frag_to_vertex[0].end(), 0);
  M.dist = {distance_field(M, M.base_points[0])};
  return M;
}

ModelManifold connect_sum(const std::vector<ModelManifold>& fragments) {
  if (fragments.empty()) throw GeometryError("connect_sum needs at least one fragment");
  ModelManifold M;
  M.fragment = false;
  M.h = fragments[0].h;
  for (const auto& f : fragments) {
    if (!f.fragment || f.ends.size() != 1) throw GeometryError("connect_sum expects single-end fragments with a marked core");
    if (f.h != M.h) throw GeometryError("all ends must share the lattice spacing h");
    M.ends.push_back(f.ends[0]);
    M.coord_stride = std::max(M.coord_stride, f.coord_stride);
  }
  const int l = static_cast<int>(fragments.size());
  // junction: centre 0, hubs 1..l
  int64_t nv = 1 + l;
  std::vector<int64_t> offset(l);
  M.frag_to_vertex.resize(l);
  for (int i = 0; i < l; ++i) {
    const auto& f = fragments[i];
    offset[i] = nv;
    M.frag_to_vertex[i].assign(f.num_vertices, -1);
    for (int v = 0; v < f.num_vertices; ++v) {
      if (f.core[v] && linf(f.coord(v), f.ends[0].n) < kCoreRadius) continue;
      M.frag_to_vertex[i][v] = static_cast<int32_t>(nv++);
    }
  }
  if (nv > std::numeric_limits<int32_t>::max()) throw GeometryError("manifold too large");
  M.num_vertices = static_cast<int>(nv);
  M.coords.assign(static_cast<size_t>(nv) * M.coord_stride, 0);
  M.tag.assign(nv, kJunctionTag);
  M.mu.assign(nv, 1.0);
  M.boundary.assign(nv, 0);
  M.core.assign(nv, 0);
  CsrBuilder b(M.num_vertices);
  for (int i = 0; i < l; ++i) {
    const int hub = 1 + i;
    b.add(0, hub);
    const auto& f = fragments[i];
    const auto& map = M.frag_to_vertex[i];
    for (int v = 0; v < f.num_vertices; ++v) {
      const int w = map[v];
      if (w < 0) continue;
      std::copy(f.coord(v), f.coord(v) + f.coord_stride, M.coords.begin() + static_cast<size_t>(w) * M.coord_stride);
      M.tag[w] = static_cast<int8_t>(i + 1);
      M.boundary[w] = f.boundary[v];
      M.core[w] = f.core[v];
      if (linf(f.coord(v), f.ends[0].n) == kCoreRadius) b.add(hub, w);
      for (int64_t e = f.row_ptr[v]; e < f.row_ptr[v + 1]; ++e) {
        const int u = map[f.col[e]];
        if (u > w) b.add(w, u);
      }
    }
  }
  b.finish(M);
  M.base_points.resize(l);
  for (int i = 0; i < l; ++i) M.base_points[i] = 1 + i;
  for (int i = 0; i < l; ++i) M.dist.push_back(distance_field(M, M.base_points[i]));
  return M;
}

std::vector<double> distance_field(const ModelManifold& M, int basepoint) {
  if (basepoint < 0 || basepoint >= M.num_vertices) throw GeometryError("basepoint out of range");
  std::vector<int> hops(M.num_vertices, -1);
  std::vector<int> queue;
  queue.reserve(M.num_vertices);
  queue.push_back(basepoint);
  hops[basepoint] = 0;
  for (size_t q = 0; q < queue.size(); ++q) {
    const int v = queue[q];
    for (int64_t e = M.row_ptr[v]; e < M.row_ptr[v + 1]; ++e) {
      const int u = M.col[e];
      if (hops[u] < 0) {
        hops[u] = hops[v] + 1;
        queue.push_back(u);
      }
    }
  }
  std::vector<double> d(M.num_vertices);
  for (int v = 0; v < M.num_vertices; ++v) d[v] = hops[v] < 0 ? kUnreachable : M.h * hops[v];
  return d;
}

Vec cutoff_phi(const ModelManifold& M, int i, double r0, double r1) {
  if (i < 1 || i > M.num_ends()) throw GeometryError("no such end");
  const double R = M.ends[i - 1].R * M.h;
  if (!(r0 < r1) || !(r1 < R - 2 * M.h)) throw GeometryError("collar outside end " + std::to_string(i));
  if (!M.fragment && r0 < M.h) throw GeometryError("collar must stay off the junction (r0 >= h)");
  const auto& d = M.dist[i - 1];
  Vec phi = Vec::Zero(M.num_vertices);
  for (int v = 0; v < M.num_vertices; ++v) {
    if (M.tag[v] != i) continue;
    const double s = (d[v] - r0) / (r1 - r0);
    phi[v] = s <= 0 ? 0.0 : s >= 1 ? 1.0 : s * s * (3 - 2 * s);
  }
  return phi;
}

std::vector<int64_t> ball_volumes(const ModelManifold& M, int z, int rmax) {
  const auto d = distance_field(M, z);
  std::vector<int64_t> vol(rmax + 1, 0);
  for (double x : d) {
    if (x == kUnreachable) continue;
    const int r = static_cast<int>(std::lround(x / M.h));
    if (r <= rmax) ++vol[r];
  }
  std::partial_sum(vol.begin(), vol.end(), vol.begin());
  return vol;
}

bool same_graph(const ModelManifold& a, const ModelManifold& b) {
  return a.num_vertices == b.num_vertices && a.row_ptr == b.row_ptr && a.col == b.col && a.weight == b.weight &&
         a.tag == b.tag && a.boundary == b.boundary && a.coords == b.coords && a.mu == b.mu;
}

int vertex_at(const ModelManifold& M, int end, const std::vector<int>& x, const std::vector<int>& y) {
  if (end < 1 || end > M.num_ends()) throw GeometryError("no such end");
  const auto& s = M.ends[end - 1];
  if (static_cast<int>(x.size()) != s.n || y.size() > s.factor.size()) throw GeometryError("coordinate arity mismatch");
  std::vector<int32_t> c(s.n + s.factor.size(), 0);
  for (int d = 0; d < s.n; ++d) {
    if (std::abs(x[d]) > s.R) throw GeometryError("point outside the end");
    c[d] = x[d];
  }
  for (size_t k = 0; k < y.size(); ++k) c[s.n + k] = ((y[k] % s.factor[k]) + s.factor[k]) % s.factor[k];
  const int v = M.frag_to_vertex[end - 1][encode(s, c.data())];
  if (v < 0) throw GeometryError("point lies in the removed core");
  return v;
}

std::string to_json(const ModelManifold& M) {
  nlohmann::json j;
  j["version"] = 1;
  j["fragment"] = M.fragment;
  for (const auto& s : M.ends) j["ends"].push_back({{"n", s.n}, {"factor", s.factor}, {"R", s.R}, {"h", s.h}});
  j["num_vertices"] = M.num_vertices;
  j["edges"] = {{"row_ptr", b64_encode(M.row_ptr.data(), M.row_ptr.size() * sizeof(int64_t))},
                {"col", b64_encode(M.col.data(), M.col.size() * sizeof(int32_t))}};
  j["tags"] = b64_encode(M.tag.data(), M.tag.size());
  j["base_points"] = M.base_points;
  return j.dump();
}

ModelManifold from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("version", 0) != 1) throw GeometryError("unsupported manifold document version");
  std::vector<ModelManifold> frags;
  for (const auto& e : j.at("ends")) {
    EndSpec s;
    s.n = e.at("n").get<int>();
    s.factor = e.value("factor", std::vector<int>{});
    s.R = e.at("R").get<int>();
    s.h = e.value("h", 1.0);
    frags.push_back(build_end(s));
  }
  ModelManifold M = j.value("fragment", false) ? std::move(frags.at(0)) : connect_sum(frags);
  if (j.contains("edges")) {
    const auto rp = b64_array<int64_t>(j["edges"].at("row_ptr").get<std::string>());
    const auto cl = b64_array<int32_t>(j["edges"].at("col").get<std::string>());
    if (rp != M.row_ptr || cl != M.col) throw GeometryError("stored edge arrays do not match the rebuilt manifold");
  }
  return M;
}

}  // namespace rieszlab
