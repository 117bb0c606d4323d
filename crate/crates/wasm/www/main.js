// Built bindings are expected in ./pkg (see the README).
import init, { selection_demo, loss_curves, gmad_demo } from "./pkg/vqsel_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function call(f, ...args) {
  try {
    $("status").textContent = "";
    return JSON.parse(f(...args));
  } catch (e) {
    $("status").textContent = String(e);
    return null;
  }
}

function heat(t) {
  // blue (easy) to red (hard)
  const c = Math.max(0, Math.min(1, t));
  return `rgb(${Math.round(40 + 200 * c)},${Math.round(90 + 40 * (1 - c))},${Math.round(220 * (1 - c))})`;
}

function drawSelection() {
  $("sel-lambda-val").textContent = $("sel-lambda").value;
  const r = call(selection_demo, num("sel-seed"), num("sel-n"), num("sel-lambda"), num("sel-budget"));
  if (!r) return;
  const cv = $("sel-canvas"), ctx = cv.getContext("2d");
  ctx.clearRect(0, 0, cv.width, cv.height);
  const xs = r.points.map((p) => p.x), ys = r.points.map((p) => p.y), ds = r.points.map((p) => p.difficulty);
  const [x0, x1, y0, y1] = [Math.min(...xs), Math.max(...xs), Math.min(...ys), Math.max(...ys)];
  const [d0, d1] = [Math.min(...ds), Math.max(...ds)];
  const px = (x) => 20 + ((x - x0) / (x1 - x0 || 1)) * (cv.width - 40);
  const py = (y) => cv.height - 20 - ((y - y0) / (y1 - y0 || 1)) * (cv.height - 40);
  const byId = new Map(r.points.map((p) => [p.id, p]));
  for (const p of r.points) {
    ctx.fillStyle = heat((p.difficulty - d0) / (d1 - d0 || 1));
    ctx.beginPath();
    ctx.arc(px(p.x), py(p.y), 3, 0, 2 * Math.PI);
    ctx.fill();
  }
  ctx.strokeStyle = "#000";
  ctx.fillStyle = "#000";
  r.steps.forEach((s, i) => {
    const p = byId.get(s.id);
    ctx.beginPath();
    ctx.arc(px(p.x), py(p.y), 7, 0, 2 * Math.PI);
    ctx.stroke();
    ctx.fillText(String(i + 1), px(p.x) + 8, py(p.y) - 6);
  });
  $("sel-steps").textContent = r.steps
    .map((s, i) => `${i + 1}. ${s.id}  g=${s.difficulty.toFixed(3)}  div=${s.diversity.toFixed(3)}  obj=${s.objective.toFixed(3)}`)
    .join("\n");
}

function drawLosses() {
  const r = call(loss_curves, num("loss-range"), 201);
  if (!r) return;
  const cv = $("loss-canvas"), ctx = cv.getContext("2d");
  ctx.clearRect(0, 0, cv.width, cv.height);
  const lo = r.gap[0], hi = r.gap[r.gap.length - 1];
  const ymax = 3;
  const px = (x) => 30 + ((x - lo) / (hi - lo)) * (cv.width - 40);
  const py = (y) => cv.height - 20 - (Math.min(y, ymax) / ymax) * (cv.height - 30);
  ctx.strokeStyle = "#ccc";
  ctx.beginPath();
  ctx.moveTo(px(0), py(0));
  ctx.lineTo(px(0), py(ymax));
  ctx.moveTo(px(lo), py(0));
  ctx.lineTo(px(hi), py(0));
  ctx.stroke();
  const line = (ys, color, dash) => {
    ctx.strokeStyle = color;
    ctx.setLineDash(dash ? [5, 4] : []);
    ctx.beginPath();
    ys.forEach((y, i) => (i ? ctx.lineTo(px(r.gap[i]), py(y)) : ctx.moveTo(px(r.gap[i]), py(y))));
    ctx.stroke();
  };
  line(r.p_hat, "#555", false);
  line(r.fidelity_harder, "#1f77b4", false);
  line(r.fidelity_easier, "#1f77b4", true);
  line(r.cross_entropy_harder, "#d62728", false);
  line(r.cross_entropy_easier, "#d62728", true);
  ctx.setLineDash([]);
}

function runGmad() {
  const r = call(gmad_demo, num("g-seed"), num("g-n"), num("g-na"), num("g-nb"), num("g-levels"), num("g-tol"));
  if (!r) return;
  const lines = Object.entries(r.report.tournament).map(([m, s]) => `${m}: rank ${s.rank}, wins ${s.wins}`);
  lines.push("");
  for (const d of r.report.duels) {
    const p = d.pair;
    lines.push(
      `${d.defender} defends level ${d.level}: ${p.id_a} vs ${p.id_b}, MOS gap ${d.mos_gap.toFixed(3)}, winner ${d.winner ?? "tie"}`,
    );
  }
  $("g-out").textContent = lines.join("\n");
}

await init();
for (const id of ["sel-seed", "sel-n", "sel-budget", "sel-lambda"]) $(id).addEventListener("input", drawSelection);
$("loss-range").addEventListener("input", drawLosses);
$("g-run").addEventListener("click", runGmad);
drawSelection();
drawLosses();
runGmad();
