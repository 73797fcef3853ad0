#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "iplforge/error.hpp"
#include "iplforge/transducer.hpp"

namespace iplforge {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logaddexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

// log-softmax over v for every (t,u) cell.
LogitLattice log_softmax(const LogitLattice& lattice) {
  LogitLattice out = lattice;
  for (int t = 0; t < lattice.t_len; ++t) {
    for (int u = 0; u < lattice.u_len; ++u) {
      double maxz = kNegInf;
      for (int v = 0; v < lattice.v_len; ++v) {
        maxz = std::max(maxz, lattice.at(t, u, v));
      }
      double total = 0.0;
      for (int v = 0; v < lattice.v_len; ++v) {
        total += std::exp(lattice.at(t, u, v) - maxz);
      }
      const double logz = maxz + std::log(total);
      for (int v = 0; v < lattice.v_len; ++v) {
        out.at(t, u, v) = lattice.at(t, u, v) - logz;
      }
    }
  }
  return out;
}

}  // namespace

LossResult transducer_loss(const LogitLattice& lattice,
                           const std::vector<int>& labels) {
  if (lattice.t_len < 1) throw ModelError("lattice has no frames");
  if (lattice.v_len < 2) throw ModelError("lattice has no labels");
  if (static_cast<int>(labels.size()) + 1 != lattice.u_len) {
    throw ModelError("label length " + std::to_string(labels.size()) +
                     " does not match lattice u dimension " +
                     std::to_string(lattice.u_len));
  }
  for (int id : labels) {
    if (id < 1 || id >= lattice.v_len) {
      throw ModelError("label id " + std::to_string(id) + " out of range");
    }
  }

  const int tp = lattice.t_len;
  const int ulen = lattice.u_len;
  const LogitLattice ell = log_softmax(lattice);
  auto label_at = [&](int u) { return labels[static_cast<std::size_t>(u)]; };

  Mat alpha(static_cast<std::size_t>(tp), static_cast<std::size_t>(ulen));
  for (int t = 0; t < tp; ++t) {
    for (int u = 0; u < ulen; ++u) {
      if (t == 0 && u == 0) {
        alpha.at(0, 0) = 0.0;
        continue;
      }
      double from_blank = kNegInf;
      double from_emit = kNegInf;
      if (t > 0) {
        from_blank = alpha.at(static_cast<std::size_t>(t - 1),
                              static_cast<std::size_t>(u)) +
                     ell.at(t - 1, u, 0);
      }
      if (u > 0) {
        from_emit = alpha.at(static_cast<std::size_t>(t),
                             static_cast<std::size_t>(u - 1)) +
                    ell.at(t, u - 1, label_at(u - 1));
      }
      alpha.at(static_cast<std::size_t>(t), static_cast<std::size_t>(u)) =
          logaddexp(from_blank, from_emit);
    }
  }
  const double log_p = alpha.at(static_cast<std::size_t>(tp - 1),
                                static_cast<std::size_t>(ulen - 1)) +
                       ell.at(tp - 1, ulen - 1, 0);

  // beta(t,u) covers the outgoing edges of (t,u) down to the terminal blank.
  Mat beta(static_cast<std::size_t>(tp), static_cast<std::size_t>(ulen));
  for (int t = tp - 1; t >= 0; --t) {
    for (int u = ulen - 1; u >= 0; --u) {
      if (t == tp - 1 && u == ulen - 1) {
        beta.at(static_cast<std::size_t>(t), static_cast<std::size_t>(u)) =
            ell.at(t, u, 0);
        continue;
      }
      double via_blank = kNegInf;
      double via_emit = kNegInf;
      if (t + 1 < tp) {
        via_blank = ell.at(t, u, 0) + beta.at(static_cast<std::size_t>(t + 1),
                                              static_cast<std::size_t>(u));
      }
      if (u + 1 < ulen) {
        via_emit = ell.at(t, u, label_at(u)) +
                   beta.at(static_cast<std::size_t>(t),
                           static_cast<std::size_t>(u + 1));
      }
      beta.at(static_cast<std::size_t>(t), static_cast<std::size_t>(u)) =
          logaddexp(via_blank, via_emit);
    }
  }

  LossResult result;
  result.nll = -log_p;
  result.grad = lattice;
  std::fill(result.grad.z.begin(), result.grad.z.end(), 0.0);
  for (int t = 0; t < tp; ++t) {
    for (int u = 0; u < ulen; ++u) {
      const double a = alpha.at(static_cast<std::size_t>(t),
                                static_cast<std::size_t>(u));
      const double b = beta.at(static_cast<std::size_t>(t),
                               static_cast<std::size_t>(u));
      const double occupancy = std::exp(a + b - log_p);
      // blank transition target: (t+1, u), or lattice exit at the corner
      double blank_next = kNegInf;
      if (t + 1 < tp) {
        blank_next = beta.at(static_cast<std::size_t>(t + 1),
                             static_cast<std::size_t>(u));
      } else if (u == ulen - 1) {
        blank_next = 0.0;
      }
      for (int v = 0; v < lattice.v_len; ++v) {
        const double p = std::exp(ell.at(t, u, v));
        double transition = 0.0;
        if (v == 0 && blank_next != kNegInf) {
          transition = std::exp(a + ell.at(t, u, 0) + blank_next - log_p);
        } else if (u + 1 < ulen && v == label_at(u)) {
          transition = std::exp(a + ell.at(t, u, v) +
                                beta.at(static_cast<std::size_t>(t),
                                        static_cast<std::size_t>(u + 1)) -
                                log_p);
        }
        result.grad.at(t, u, v) = occupancy * p - transition;
      }
    }
  }
  return result;
}

namespace {

// dY flows through y = x + tanh(W window(x) + b); returns gradient w.r.t. x
// and accumulates dW, dB.
Mat conv_backward(const Mat& x, const Mat& y, const ParamBlock& w,
                  const Mat& dy, ParamBlock& dw, ParamBlock& db) {
  const std::size_t f = x.cols;
  Mat dx = dy;  // residual branch
  std::vector<double> dpre(f);
  for (std::size_t t = 0; t < x.rows; ++t) {
    for (std::size_t r = 0; r < f; ++r) {
      const double th = y.at(t, r) - x.at(t, r);
      dpre[r] = dy.at(t, r) * (1.0 - th * th);
      db.values[r] += dpre[r];
    }
    for (int off = -1; off <= 1; ++off) {
      const auto src = static_cast<long long>(t) + off;
      if (src < 0 || src >= static_cast<long long>(x.rows)) continue;
      const std::size_t s = static_cast<std::size_t>(src);
      const std::size_t base = static_cast<std::size_t>(off + 1) * f;
      for (std::size_t r = 0; r < f; ++r) {
        for (std::size_t c = 0; c < f; ++c) {
          dw.at(r, base + c) += dpre[r] * x.at(s, c);
          dx.at(s, c) += w.at(r, base + c) * dpre[r];
        }
      }
    }
  }
  return dx;
}

}  // namespace

Model backward(const Model& model, const ForwardTrace& trace,
               const std::vector<int>& labels,
               const LogitLattice& lattice_grad) {
  const LogitLattice& lat = trace.lattice;
  if (lattice_grad.t_len != lat.t_len || lattice_grad.u_len != lat.u_len ||
      lattice_grad.v_len != lat.v_len) {
    throw ModelError("lattice gradient shape mismatch");
  }
  const std::size_t tp = static_cast<std::size_t>(lat.t_len);
  const std::size_t ulen = static_cast<std::size_t>(lat.u_len);
  const std::size_t vlen = static_cast<std::size_t>(lat.v_len);
  const std::size_t f = trace.downsampled.cols;
  const std::size_t edim = trace.encoded.cols;
  const std::size_t h = trace.rec_state.cols;
  const std::size_t jdim = trace.joiner_enc.cols;

  Model grads = zeros_like(model);
  const ParamBlock& wo = model.block("join.wo");
  const ParamBlock& jb = model.block("join.b");
  ParamBlock& d_wo = grads.block("join.wo");
  ParamBlock& d_bo = grads.block("join.bo");
  ParamBlock& d_jb = grads.block("join.b");

  Mat d_je(tp, jdim);
  Mat d_jl(ulen, jdim);
  std::vector<double> act(jdim);
  std::vector<double> dpre(jdim);
  for (std::size_t t = 0; t < tp; ++t) {
    for (std::size_t u = 0; u < ulen; ++u) {
      for (std::size_t j = 0; j < jdim; ++j) {
        act[j] = std::tanh(trace.joiner_enc.at(t, j) + trace.joiner_lab.at(u, j) +
                           jb.values[j]);
        dpre[j] = 0.0;
      }
      for (std::size_t v = 0; v < vlen; ++v) {
        const double g = lattice_grad.at(static_cast<int>(t),
                                         static_cast<int>(u),
                                         static_cast<int>(v));
        if (g == 0.0) continue;
        d_bo.values[v] += g;
        for (std::size_t j = 0; j < jdim; ++j) {
          d_wo.at(v, j) += g * act[j];
          dpre[j] += wo.at(v, j) * g;
        }
      }
      for (std::size_t j = 0; j < jdim; ++j) {
        dpre[j] *= 1.0 - act[j] * act[j];
        d_jb.values[j] += dpre[j];
        d_je.at(t, j) += dpre[j];
        d_jl.at(u, j) += dpre[j];
      }
    }
  }

  // joiner_enc = encoded * we^T, joiner_lab = rec_state * wl^T
  const ParamBlock& we = model.block("join.we");
  const ParamBlock& wl = model.block("join.wl");
  ParamBlock& d_we = grads.block("join.we");
  ParamBlock& d_wl = grads.block("join.wl");
  Mat d_enc(tp, edim);
  for (std::size_t t = 0; t < tp; ++t) {
    for (std::size_t j = 0; j < jdim; ++j) {
      const double g = d_je.at(t, j);
      if (g == 0.0) continue;
      for (std::size_t e = 0; e < edim; ++e) {
        d_we.at(j, e) += g * trace.encoded.at(t, e);
        d_enc.at(t, e) += we.at(j, e) * g;
      }
    }
  }
  Mat d_state(ulen, h);
  for (std::size_t u = 0; u < ulen; ++u) {
    for (std::size_t j = 0; j < jdim; ++j) {
      const double g = d_jl.at(u, j);
      if (g == 0.0) continue;
      for (std::size_t c = 0; c < h; ++c) {
        d_wl.at(j, c) += g * trace.rec_state.at(u, c);
        d_state.at(u, c) += wl.at(j, c) * g;
      }
    }
  }

  // Label encoder, backwards through the recurrence.
  const ParamBlock& wx = model.block("lbl.rec.wx");
  const ParamBlock& wh = model.block("lbl.rec.wh");
  ParamBlock& d_wx = grads.block("lbl.rec.wx");
  ParamBlock& d_wh = grads.block("lbl.rec.wh");
  ParamBlock& d_rb = grads.block("lbl.rec.b");
  ParamBlock& d_embed = grads.block("lbl.embed");
  std::vector<double> carry(h, 0.0);
  std::vector<double> dp(h);
  for (std::size_t u = ulen; u-- > 0;) {
    for (std::size_t r = 0; r < h; ++r) {
      const double s = trace.rec_state.at(u, r);
      dp[r] = (d_state.at(u, r) + carry[r]) * (1.0 - s * s);
      d_rb.values[r] += dp[r];
    }
    const auto row = static_cast<std::size_t>(trace.emb_ids[u]);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < h; ++c) {
        d_wx.at(r, c) += dp[r] * trace.emb_rows.at(u, c);
        if (u > 0) d_wh.at(r, c) += dp[r] * trace.rec_state.at(u - 1, c);
      }
    }
    for (std::size_t c = 0; c < h; ++c) {
      double dxc = 0.0;
      double dcarry = 0.0;
      for (std::size_t r = 0; r < h; ++r) {
        dxc += wx.at(r, c) * dp[r];
        dcarry += wh.at(r, c) * dp[r];
      }
      d_embed.at(row, c) += dxc;
      carry[c] = dcarry;
    }
  }

  // Encoder projection.
  const ParamBlock& proj_w = model.block("enc.proj.w");
  ParamBlock& d_proj_w = grads.block("enc.proj.w");
  ParamBlock& d_proj_b = grads.block("enc.proj.b");
  Mat d_attn_out(tp, f);
  for (std::size_t t = 0; t < tp; ++t) {
    for (std::size_t e = 0; e < edim; ++e) {
      const double g = d_enc.at(t, e);
      if (g == 0.0) continue;
      d_proj_b.values[e] += g;
      for (std::size_t c = 0; c < f; ++c) {
        d_proj_w.at(e, c) += g * trace.attn_out.at(t, c);
        d_attn_out.at(t, c) += proj_w.at(e, c) * g;
      }
    }
  }

  Mat d_conv2_out(tp, f);
  if (model.arch.use_attention) {
    const Mat& x = trace.conv2_out;
    const double scale = 1.0 / std::sqrt(static_cast<double>(f));
    d_conv2_out = d_attn_out;  // residual branch
    Mat d_v(tp, f);
    Mat d_q(tp, f);
    Mat d_k(tp, f);
    std::vector<double> dw_row(tp);
    for (std::size_t t = 0; t < tp; ++t) {
      double dot = 0.0;
      for (std::size_t s = 0; s < tp; ++s) {
        double dw = 0.0;
        for (std::size_t c = 0; c < f; ++c) {
          dw += d_attn_out.at(t, c) * trace.attn_v.at(s, c);
          d_v.at(s, c) += trace.attn_weights.at(t, s) * d_attn_out.at(t, c);
        }
        dw_row[s] = dw;
        dot += trace.attn_weights.at(t, s) * dw;
      }
      for (std::size_t s = 0; s < tp; ++s) {
        const double de = trace.attn_weights.at(t, s) * (dw_row[s] - dot);
        for (std::size_t c = 0; c < f; ++c) {
          d_q.at(t, c) += de * trace.attn_k.at(s, c) * scale;
          d_k.at(s, c) += de * trace.attn_q.at(t, c) * scale;
        }
      }
    }
    struct Proj {
      const char* name;
      const Mat* grad_out;
    };
    for (const Proj& p : {Proj{"enc.attn.wq", &d_q}, Proj{"enc.attn.wk", &d_k},
                          Proj{"enc.attn.wv", &d_v}}) {
      const ParamBlock& wm = model.block(p.name);
      ParamBlock& d_wm = grads.block(p.name);
      for (std::size_t t = 0; t < tp; ++t) {
        for (std::size_t r = 0; r < f; ++r) {
          const double g = p.grad_out->at(t, r);
          if (g == 0.0) continue;
          for (std::size_t c = 0; c < f; ++c) {
            d_wm.at(r, c) += g * x.at(t, c);
            d_conv2_out.at(t, c) += wm.at(r, c) * g;
          }
        }
      }
    }
  } else {
    d_conv2_out = d_attn_out;
  }

  const Mat d_conv1_out = conv_backward(
      trace.conv1_out, trace.conv2_out, model.block("enc.conv2.w"),
      d_conv2_out, grads.block("enc.conv2.w"), grads.block("enc.conv2.b"));
  conv_backward(trace.downsampled, trace.conv1_out, model.block("enc.conv1.w"),
                d_conv1_out, grads.block("enc.conv1.w"),
                grads.block("enc.conv1.b"));
  return grads;
}

Model backward(const Model& model, const Features& features,
               const std::vector<int>& labels,
               const LogitLattice& lattice_grad) {
  const ForwardTrace trace = forward_trace(model, features, labels);
  return backward(model, trace, labels, lattice_grad);
}

}  // namespace iplforge
