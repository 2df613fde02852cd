#include "sde_elbo/score_net.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "sde_elbo/io.hpp"

namespace sde_elbo {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_d1(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}
inline double silu_d2(double x) {
  const double s = sigmoid(x);
  return s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s));
}

}  // namespace

void ParamGrad::set_zero() {
  for (auto& l : layers) {
    l.W.setZero();
    l.b.setZero();
  }
}

void ParamGrad::axpy(double alpha, const ParamGrad& other) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].W += alpha * other.layers[i].W;
    layers[i].b += alpha * other.layers[i].b;
  }
}

void ParamGrad::scale(double alpha) {
  for (auto& l : layers) {
    l.W *= alpha;
    l.b *= alpha;
  }
}

double ParamGrad::max_abs() const {
  double m = 0.0;
  for (const auto& l : layers) {
    m = std::max(m, l.W.cwiseAbs().maxCoeff());
    if (l.b.size() > 0) m = std::max(m, l.b.cwiseAbs().maxCoeff());
  }
  return m;
}

bool ParamGrad::all_finite() const {
  for (const auto& l : layers)
    if (!l.W.allFinite() || !l.b.allFinite()) return false;
  return true;
}

ScoreNet ScoreNet::init(const std::vector<int>& widths, int time_features,
                        std::uint64_t seed) {
  if (widths.size() < 2)
    throw std::invalid_argument("ScoreNet: need at least input and output widths");
  for (int w : widths)
    if (w <= 0) throw std::invalid_argument("ScoreNet: zero or negative width");
  if (time_features < 0)
    throw std::invalid_argument("ScoreNet: negative time feature count");
  const int d = widths.back();
  if (widths.front() != d + 1 + 2 * time_features)
    throw std::invalid_argument(
        "ScoreNet: input width must equal d + 1 + 2 * time_features");
  ScoreNet net;
  net.widths_ = widths;
  net.time_features_ = time_features;
  Rng rng(mix_seed(seed, 0x5c0e));
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    LayerParams p;
    p.W.resize(widths[l + 1], widths[l]);
    const double scale = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    for (int j = 0; j < p.W.cols(); ++j)
      for (int i = 0; i < p.W.rows(); ++i) p.W(i, j) = scale * rng.gauss();
    p.b = Vec::Zero(widths[l + 1]);
    net.layers_.push_back(std::move(p));
  }
  return net;
}

ParamGrad ScoreNet::zero_grad() const {
  ParamGrad g;
  for (const auto& l : layers_) {
    LayerParams z;
    z.W = Mat::Zero(l.W.rows(), l.W.cols());
    z.b = Vec::Zero(l.b.size());
    g.layers.push_back(std::move(z));
  }
  return g;
}

std::size_t ScoreNet::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_)
    n += static_cast<std::size_t>(l.W.size()) + static_cast<std::size_t>(l.b.size());
  return n;
}

void ScoreNet::features(const Mat& y, const std::vector<double>& s, Mat& x0) const {
  const int d = dim();
  const int n = static_cast<int>(y.cols());
  if (y.rows() != d) throw std::invalid_argument("ScoreNet: input dimension mismatch");
  if (static_cast<int>(s.size()) != n)
    throw std::invalid_argument("ScoreNet: time vector length mismatch");
  x0.resize(input_dim(), n);
  x0.topRows(d) = y;
  for (int i = 0; i < n; ++i) {
    x0(d, i) = s[i];
    for (int j = 0; j < time_features_; ++j) {
      const double w = std::ldexp(M_PI, j) * s[i];  // 2^j pi s
      x0(d + 1 + 2 * j, i) = std::sin(w);
      x0(d + 2 + 2 * j, i) = std::cos(w);
    }
  }
}

void ScoreNet::forward_batch(const Mat& y, const std::vector<double>& s,
                             BatchCache& cache) const {
  features(y, s, cache.x0);
  const std::size_t nl = layers_.size();
  cache.pre.resize(nl - 1);
  cache.post.resize(nl - 1);
  const Mat* x = &cache.x0;
  for (std::size_t l = 0; l + 1 < nl; ++l) {
    cache.pre[l] = (layers_[l].W * (*x)).colwise() + layers_[l].b;
    cache.post[l] = cache.pre[l].unaryExpr([](double v) { return silu(v); });
    x = &cache.post[l];
  }
  cache.out = (layers_.back().W * (*x)).colwise() + layers_.back().b;
}

Vec ScoreNet::forward(const Vec& y, double s) const {
  BatchCache c;
  forward_batch(y, {s}, c);
  return c.out.col(0);
}

void ScoreNet::vjp_batch(const BatchCache& cache, const Mat& cot,
                         ParamGrad* pgrad, Mat* ygrad) const {
  const std::size_t nl = layers_.size();
  Mat g = cot;  // gradient wrt current layer output
  for (std::size_t l = nl; l-- > 0;) {
    const Mat& input = (l == 0) ? cache.x0 : cache.post[l - 1];
    if (pgrad) {
      pgrad->layers[l].W.noalias() += g * input.transpose();
      pgrad->layers[l].b += g.rowwise().sum();
    }
    if (l == 0 && !ygrad) break;
    Mat gin = layers_[l].W.transpose() * g;
    if (l == 0) {
      *ygrad = gin.topRows(dim());
      break;
    }
    g = gin.cwiseProduct(
        cache.pre[l - 1].unaryExpr([](double v) { return silu_d1(v); }));
  }
}

std::pair<ParamGrad, Vec> ScoreNet::vjp(const Vec& y, double s,
                                        const Vec& cot) const {
  if (cot.size() != dim())
    throw std::invalid_argument("ScoreNet::vjp: cotangent dimension mismatch");
  BatchCache c;
  forward_batch(y, {s}, c);
  ParamGrad pg = zero_grad();
  Mat ygrad;
  vjp_batch(c, cot, &pg, &ygrad);
  if (!pg.all_finite() || !ygrad.allFinite())
    throw std::runtime_error("ScoreNet::vjp: non-finite gradient");
  return {std::move(pg), ygrad.col(0)};
}

void ScoreNet::jvp_batch(const BatchCache& cache, const Mat& v,
                         TangentCache& tc) const {
  const std::size_t nl = layers_.size();
  tc.tpre.resize(nl - 1);
  tc.tpost.resize(nl - 1);
  // tangent of the feature block: spatial rows carry v, time rows are zero
  tc.t0 = Mat::Zero(input_dim(), v.cols());
  tc.t0.topRows(dim()) = v;
  for (std::size_t l = 0; l + 1 < nl; ++l) {
    tc.tpre[l].noalias() = layers_[l].W * ((l == 0) ? tc.t0 : tc.tpost[l - 1]);
    tc.tpost[l] = tc.tpre[l].cwiseProduct(
        cache.pre[l].unaryExpr([](double x) { return silu_d1(x); }));
  }
  tc.tout.noalias() = layers_.back().W * (nl >= 2 ? tc.tpost[nl - 2] : tc.t0);
}

Vec ScoreNet::jvp(const Vec& y, double s, const Vec& v) const {
  BatchCache c;
  forward_batch(y, {s}, c);
  TangentCache tc;
  jvp_batch(c, v, tc);
  return tc.tout.col(0);
}

void ScoreNet::vjp_with_tangent(const BatchCache& cache, const TangentCache& tc,
                                const Mat& gout, const Mat& gtan,
                                ParamGrad* pgrad) const {
  const std::size_t nl = layers_.size();
  Mat g = gout;   // cotangent of layer output
  Mat gt = gtan;  // cotangent of layer output tangent
  for (std::size_t l = nl; l-- > 0;) {
    const Mat& in_ref = (l == 0) ? cache.x0 : cache.post[l - 1];
    const Mat& tin_ref = (l == 0) ? tc.t0 : tc.tpost[l - 1];
    if (pgrad) {
      pgrad->layers[l].W.noalias() += g * in_ref.transpose();
      pgrad->layers[l].W.noalias() += gt * tin_ref.transpose();
      pgrad->layers[l].b += g.rowwise().sum();
    }
    if (l == 0) break;
    Mat gin = layers_[l].W.transpose() * g;
    Mat gtin = layers_[l].W.transpose() * gt;
    const Mat d1 = cache.pre[l - 1].unaryExpr([](double x) { return silu_d1(x); });
    const Mat d2 = cache.pre[l - 1].unaryExpr([](double x) { return silu_d2(x); });
    g = gin.cwiseProduct(d1) + gtin.cwiseProduct(d2).cwiseProduct(tc.tpre[l - 1]);
    gt = gtin.cwiseProduct(d1);
  }
}

double ScoreNet::divergence_exact(const Vec& y, double s) const {
  BatchCache c;
  forward_batch(y, {s}, c);
  const int d = dim();
  double tr = 0.0;
  Mat ygrad;
  for (int j = 0; j < d; ++j) {
    Mat cot = Mat::Zero(d, 1);
    cot(j, 0) = 1.0;
    vjp_batch(c, cot, nullptr, &ygrad);
    tr += ygrad(j, 0);
  }
  return tr;
}

void ScoreNet::divergence_exact_batch(const BatchCache& cache, Vec& out) const {
  const int d = dim();
  const int n = static_cast<int>(cache.out.cols());
  out = Vec::Zero(n);
  Mat ygrad;
  for (int j = 0; j < d; ++j) {
    Mat cot = Mat::Zero(d, n);
    cot.row(j).setOnes();
    vjp_batch(cache, cot, nullptr, &ygrad);
    out += ygrad.row(j).transpose();
  }
}

MeanStderr ScoreNet::divergence_hutchinson(const Vec& y, double s,
                                           std::size_t probes, Rng& rng) const {
  if (probes < 1)
    throw std::invalid_argument("divergence_hutchinson: probes >= 1");
  BatchCache c;
  forward_batch(y, {s}, c);
  const int d = dim();
  std::vector<double> est(probes);
  Mat v(d, 1);
  TangentCache tc;
  for (std::size_t p = 0; p < probes; ++p) {
    for (int i = 0; i < d; ++i) v(i, 0) = rng.rademacher();
    jvp_batch(c, v, tc);
    est[p] = (v.col(0).cwiseProduct(tc.tout.col(0))).sum();
  }
  return mean_stderr(est);
}

ScoreNet default_toy_net(int d, std::uint64_t seed) {
  const int k = 6;
  return ScoreNet::init({d + 1 + 2 * k, 128, 128, d}, k, seed);
}

void ScoreNet::save(const std::string& path, const std::string& parameterization,
                    const std::string& config_hash) const {
  std::ostringstream os;
  os << "format = sde_elbo_checkpoint_v1\n";
  os << "widths =";
  for (int w : widths_) os << ' ' << w;
  os << '\n';
  os << "time_features = " << time_features_ << '\n';
  os << "activation = silu\n";
  os << "parameterization = " << parameterization << '\n';
  os << "config_hash = " << config_hash << '\n';
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    os << "param.layer" << l << ".W.shape = " << layers_[l].W.rows() << ' '
       << layers_[l].W.cols() << '\n';
    os << "param.layer" << l << ".W.data = " << base64_encode_doubles_rowmajor(layers_[l].W)
       << '\n';
    os << "param.layer" << l << ".b.shape = " << layers_[l].b.size() << '\n';
    os << "param.layer" << l << ".b.data = "
       << base64_encode_doubles(layers_[l].b.data(),
                               static_cast<std::size_t>(layers_[l].b.size()))
       << '\n';
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("ScoreNet::save: cannot open " + path);
  f << os.str();
}

ScoreNetCheckpoint ScoreNet::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("ScoreNet::load: cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos)
      throw std::runtime_error("ScoreNet::load: malformed line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw std::runtime_error("ScoreNet::load: missing key " + key);
    return it->second;
  };
  if (need("format") != "sde_elbo_checkpoint_v1")
    throw std::runtime_error("ScoreNet::load: unknown checkpoint format");
  std::vector<int> widths;
  {
    std::istringstream is(need("widths"));
    int w;
    while (is >> w) widths.push_back(w);
  }
  const int k = std::stoi(need("time_features"));
  ScoreNet net = ScoreNet::init(widths, k, 0);
  for (std::size_t l = 0; l < net.layers_.size(); ++l) {
    const std::string pre = "param.layer" + std::to_string(l);
    std::istringstream ws(need(pre + ".W.shape"));
    int r = 0, c = 0;
    ws >> r >> c;
    if (r != net.layers_[l].W.rows() || c != net.layers_[l].W.cols())
      throw std::runtime_error("ScoreNet::load: weight shape mismatch");
    base64_decode_doubles_rowmajor(need(pre + ".W.data"), net.layers_[l].W);
    std::istringstream bs(need(pre + ".b.shape"));
    int bn = 0;
    bs >> bn;
    if (bn != net.layers_[l].b.size())
      throw std::runtime_error("ScoreNet::load: bias shape mismatch");
    base64_decode_doubles(need(pre + ".b.data"), net.layers_[l].b.data(),
                          static_cast<std::size_t>(bn));
  }
  return {std::move(net), need("parameterization"), need("config_hash")};
}

}  // namespace sde_elbo
