import init, { se_curves, cluster_spectrum, zeta_series } from "./pkg/reprocs_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

// Line plot on a log10 y axis. `series` is [{ys, color}], all sharing xs.
function logPlot(canvas, xs, series, marks = []) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 40;
  ctx.clearRect(0, 0, w, h);
  const all = series.flatMap((s) => s.ys).filter((v) => v > 0);
  if (!all.length) return;
  const lo = Math.floor(Math.log10(Math.min(...all)));
  const hi = Math.ceil(Math.log10(Math.max(...all)));
  const x0 = xs[0], x1 = xs[xs.length - 1];
  const px = (x) => pad + ((x - x0) / Math.max(x1 - x0, 1)) * (w - 2 * pad);
  const py = (y) => h - pad - ((Math.log10(y) - lo) / Math.max(hi - lo, 1)) * (h - 2 * pad);

  ctx.strokeStyle = "#ccc";
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  for (let e = lo; e <= hi; e++) {
    const y = py(10 ** e);
    ctx.beginPath(); ctx.moveTo(pad, y); ctx.lineTo(w - pad, y); ctx.stroke();
    ctx.fillText(`1e${e}`, 2, y + 4);
  }
  ctx.fillText(String(x0), pad, h - pad + 14);
  ctx.fillText(String(x1), w - pad - 20, h - pad + 14);

  ctx.strokeStyle = "#e0e0ff";
  for (const m of marks) {
    ctx.beginPath(); ctx.moveTo(px(m), pad); ctx.lineTo(px(m), h - pad); ctx.stroke();
  }
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    s.ys.forEach((v, i) => {
      if (!(v > 0)) return;
      const f = i === 0 ? "moveTo" : "lineTo";
      ctx[f](px(xs[i]), py(v));
    });
    ctx.stroke();
  }
}

function guard(out, fn) {
  try {
    fn();
    out.classList.remove("err");
  } catch (e) {
    out.textContent = String(e);
    out.classList.add("err");
  }
}

function runSe() {
  const out = $("se-events");
  out.textContent = "running…";
  setTimeout(() => guard(out, () => {
    const v = JSON.parse(se_curves(BigInt(num("se-seed")), num("se-delta"), num("se-s"), 2));
    logPlot($("se-plot"), v.t, [
      { ys: v.se_reprocs, color: "#1f77b4" },
      { ys: v.se_cpca, color: "#ff7f0e" },
    ], v.events.map(([t]) => t));
    const last = v.t.length - 1;
    out.textContent = `updates: ${v.events.map(([t, l]) => `${l}@${t}`).join(", ")}\n` +
      `final SE: addition only ${v.se_reprocs[last].toExponential(2)}, with deletion ${v.se_cpca[last].toExponential(2)}`;
  }), 10);
}

function runClusters() {
  const out = $("cl-out");
  guard(out, () => {
    const gammas = new Float64Array($("cl-gammas").value.split(",").map(Number));
    const v = JSON.parse(cluster_spectrum(gammas, 4, num("cl-cap")));
    const ctx = $("cl-plot").getContext("2d");
    const { width: w, height: h } = $("cl-plot");
    ctx.clearRect(0, 0, w, h);
    const logs = v.lambdas.map(Math.log10);
    const lo = Math.min(...logs) - 0.5, hi = Math.max(...logs) + 0.5;
    const colors = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];
    let idx = 0;
    v.sizes.forEach((size, c) => {
      for (let i = 0; i < size; i++, idx++) {
        const x = 30 + (idx / Math.max(v.lambdas.length - 1, 1)) * (w - 60);
        const y = h - 20 - ((logs[idx] - lo) / (hi - lo)) * (h - 40);
        ctx.fillStyle = colors[c % colors.length];
        ctx.beginPath(); ctx.arc(x, y, 5, 0, 2 * Math.PI); ctx.fill();
      }
    });
    out.textContent = `sizes ${JSON.stringify(v.sizes)}\n` +
      `max within-cluster spread ${v.g_max.toPrecision(4)}, max gap ratio ${v.h_max.toPrecision(4)}`;
  });
}

function runZeta() {
  const out = $("z-out");
  guard(out, () => {
    const v = JSON.parse(zeta_series(num("z-r0"), num("z-c"), num("z-f"), num("z-kappa"), num("z-g"), num("z-frac")));
    const ks = v.envelope.map((_, i) => i);
    const series = [{ ys: v.envelope, color: "#999" }];
    if (v.series.length) series.push({ ys: v.series, color: "#d62728" });
    logPlot($("z-plot"), ks, series);
    out.textContent = v.failed_at
      ? `denominator turns non-positive at k = ${v.failed_at}`
      : `zeta = ${v.zeta.toExponential(3)}, K = ${v.k}, final value ${v.series[v.k].toExponential(3)} (grey: 0.6^k + 0.4 c zeta)`;
  });
}

await init();
$("status").textContent = "ready";
$("se-run").onclick = runSe;
$("cl-run").onclick = runClusters;
$("z-run").onclick = runZeta;
runClusters();
runZeta();
runSe();
