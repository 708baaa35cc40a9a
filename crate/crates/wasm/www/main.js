import init, { manifoldNames, walkXyz, orderFit, densityGrid } from "./pkg/manifold_walk_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function report(id, fn) {
  const out = $(id);
  out.classList.remove("err");
  try {
    const t0 = performance.now();
    const text = fn();
    out.textContent = `${text}  (${((performance.now() - t0) / 1000).toFixed(2)} s)`;
  } catch (e) {
    out.classList.add("err");
    out.textContent = String(e.message ?? e);
  }
}

// walk: orthographic view, rotated by dragging
let points = new Float64Array();
let yaw = 0.6, pitch = 0.4;

function drawWalk() {
  const c = $("w-canvas"), g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  if (points.length === 0) return;
  let r = 0;
  for (const v of points) r = Math.max(r, Math.abs(v));
  const s = 0.45 * Math.min(c.width, c.height) / (r || 1);
  const [cy, sy, cp, sp] = [Math.cos(yaw), Math.sin(yaw), Math.cos(pitch), Math.sin(pitch)];
  g.strokeStyle = "rgba(20, 60, 160, 0.35)";
  g.beginPath();
  for (let i = 0; i < points.length; i += 3) {
    const [x, y, z] = [points[i], points[i + 1], points[i + 2]];
    const u = cy * x - sy * y;
    const w = sy * x + cy * y;
    const v = cp * z - sp * w;
    const px = c.width / 2 + s * u, py = c.height / 2 - s * v;
    if (i === 0) g.moveTo(px, py); else g.lineTo(px, py);
  }
  g.stroke();
}

function runWalk() {
  report("w-out", () => {
    points = walkXyz($("w-manifold").value, $("w-ret").value, num("w-eps"), num("w-steps"), num("w-seed"));
    drawWalk();
    return `${points.length / 3} points drawn`;
  });
}

function dragToRotate() {
  const c = $("w-canvas");
  let last = null;
  c.addEventListener("pointerdown", (e) => { last = [e.clientX, e.clientY]; c.setPointerCapture(e.pointerId); });
  c.addEventListener("pointerup", () => { last = null; });
  c.addEventListener("pointermove", (e) => {
    if (!last) return;
    yaw += (e.clientX - last[0]) * 0.01;
    pitch += (e.clientY - last[1]) * 0.01;
    last = [e.clientX, e.clientY];
    drawWalk();
  });
}

// order fit: log-log scatter with the fitted line
function runOrder() {
  report("o-out", () => {
    const f = orderFit($("o-manifold").value, $("o-ret").value, num("o-trials"), 1);
    const [slope, intercept] = [f[0], f[1]];
    const lt = [], le = [];
    for (let i = 2; i < f.length; i += 2) { lt.push(Math.log10(f[i])); le.push(Math.log10(f[i + 1])); }
    const c = $("o-canvas"), g = c.getContext("2d");
    g.clearRect(0, 0, c.width, c.height);
    const pad = 40;
    const [x0, x1] = [Math.min(...lt), Math.max(...lt)];
    const [y0, y1] = [Math.min(...le) - 0.5, Math.max(...le) + 0.5];
    const X = (x) => pad + (x - x0) / (x1 - x0) * (c.width - 2 * pad);
    const Y = (y) => c.height - pad - (y - y0) / (y1 - y0) * (c.height - 2 * pad);
    g.fillStyle = "#333";
    g.fillText("log10 tau", c.width / 2 - 20, c.height - 10);
    g.fillText("log10 error", 4, 14);
    g.strokeStyle = "#c33";
    g.beginPath();
    g.moveTo(X(x0), Y(intercept / Math.LN10 + slope * x0));
    g.lineTo(X(x1), Y(intercept / Math.LN10 + slope * x1));
    g.stroke();
    g.fillStyle = "#1a4aa0";
    lt.forEach((x, i) => { g.beginPath(); g.arc(X(x), Y(le[i]), 4, 0, 2 * Math.PI); g.fill(); });
    return `slope ${slope.toFixed(4)}`;
  });
}

// density: observed and expected grids side by side
function heat(g, vals, n, ox, size, vmax) {
  const cell = size / n;
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      const a = Math.min(1, vals[i * n + j] / vmax);
      g.fillStyle = `rgba(200, 60, 20, ${a})`;
      g.fillRect(ox + i * cell, size - (j + 1) * cell + 10, cell, cell);
    }
  }
  g.strokeStyle = "#999";
  g.strokeRect(ox, 10, size, size);
}

function runDensity() {
  report("d-out", () => {
    const n = num("d-bins");
    const d = densityGrid($("d-manifold").value, num("d-eps"), num("d-steps"), n, 1);
    const obs = d.subarray(2, 2 + n * n), exp = d.subarray(2 + n * n);
    const vmax = Math.max(...obs, ...exp);
    const c = $("d-canvas"), g = c.getContext("2d");
    g.clearRect(0, 0, c.width, c.height);
    heat(g, obs, n, 10, 300, vmax);
    heat(g, exp, n, 350, 300, vmax);
    return `total variation ${d[0].toFixed(4)} over ${d[1]} samples (left observed, right expected)`;
  });
}

await init();
const names = manifoldNames();
for (const id of ["w-manifold", "o-manifold"]) {
  for (const n of names) $(id).add(new Option(n, n));
}
$("w-manifold").value = "genus2";
$("o-manifold").value = "sphere";
$("w-run").onclick = runWalk;
$("o-run").onclick = runOrder;
$("d-run").onclick = runDensity;
dragToRotate();
runWalk();
