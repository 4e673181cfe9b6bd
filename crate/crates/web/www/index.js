import init, { ic_curve, ror_table, simulate } from "./pkg/lodsig_web.js";

const $ = (id) => document.getElementById(id);
const fmt = (x, d = 3) => (x === null || x === undefined ? "n/a" : x.toFixed(d));

function drawIc() {
  const e = parseFloat($("ic-e").value);
  const nMax = Math.max(1, parseInt($("ic-n").value, 10) || 1);
  $("ic-e-val").textContent = e.toFixed(1);
  const pts = JSON.parse(ic_curve(e, nMax));
  const c = $("ic-canvas");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const lo = Math.min(...pts.map((p) => p.lo));
  const hi = Math.max(...pts.map((p) => p.hi));
  const pad = 30;
  const x = (n) => pad + (n / nMax) * (c.width - 2 * pad);
  const y = (v) => c.height - pad - ((v - lo) / (hi - lo)) * (c.height - 2 * pad);

  g.fillStyle = "rgba(70,120,200,0.2)";
  g.beginPath();
  pts.forEach((p, i) => (i ? g.lineTo(x(p.n), y(p.hi)) : g.moveTo(x(p.n), y(p.hi))));
  [...pts].reverse().forEach((p) => g.lineTo(x(p.n), y(p.lo)));
  g.fill();

  g.strokeStyle = "#888";
  g.beginPath();
  g.moveTo(pad, y(0));
  g.lineTo(c.width - pad, y(0));
  g.stroke();

  g.strokeStyle = "#2458a8";
  g.lineWidth = 2;
  g.beginPath();
  pts.forEach((p, i) => (i ? g.lineTo(x(p.n), y(p.ic)) : g.moveTo(x(p.n), y(p.ic))));
  g.stroke();
  g.lineWidth = 1;

  g.fillStyle = "#222";
  g.fillText("0", 8, y(0) + 4);
  g.fillText(`n = ${nMax}`, c.width - pad - 30, c.height - 8);
  g.fillText(hi.toFixed(1), 4, pad);
  g.fillText(lo.toFixed(1), 4, c.height - pad);
}

function updateRor() {
  const v = ["w00", "w01", "w10", "w11"].map((id) => Math.max(0, parseInt($(id).value, 10) || 0));
  const r = JSON.parse(ror_table(...v));
  $("ror-out").textContent =
    `ROR ${fmt(r.ror)}, ROR05 ${fmt(r.ror05)}` + (r.corrected ? " (zero cell: 0.5 added to every cell)" : "");
}

let sim = null;

function drawSim() {
  const c = $("sim-canvas");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  if (!sim) return;
  const w = (c.width - 40) / sim.results.length;
  sim.results.forEach((r, i) => {
    const h = (r.map_all ?? 0) * (c.height - 50);
    g.fillStyle = "#4a8c4a";
    g.fillRect(20 + i * w + 8, c.height - 30 - h, w - 16, h);
    g.fillStyle = "#222";
    g.fillText(r.algorithm, 20 + i * w + 8, c.height - 12);
    g.fillText(fmt(r.map_all, 2), 20 + i * w + 8, c.height - 36 - h);
  });
  g.fillText("MAP over injected truth", 20, 14);
}

function showList() {
  const r = sim.results.find((r) => r.algorithm === $("sim-alg").value);
  const rows = r.top
    .map((e) => `<tr class="${e.known ? "known" : ""}"><td>${e.rank}</td><td>${e.event_code}</td><td>${fmt(e.score)}</td></tr>`)
    .join("");
  $("sim-table").innerHTML =
    `<tr><th>rank</th><th>event</th><th>score</th></tr>${rows}` +
    (r.filtered ? `<tr><td></td><td colspan="2">${r.filtered} events filtered</td></tr>` : "");
}

function runSim() {
  $("sim-info").textContent = "running...";
  $("sim-info").className = "";
  setTimeout(() => {
    try {
      const t0 = performance.now();
      sim = JSON.parse(simulate(parseInt($("sim-n").value, 10), parseFloat($("sim-rr").value), parseInt($("sim-seed").value, 10)));
      $("sim-info").textContent =
        `${sim.drug}: ${sim.exposed_patients} exposed patients; known reactions ${sim.truth.join(", ")}; ` +
        `${(performance.now() - t0).toFixed(0)} ms`;
      const sel = $("sim-alg");
      const keep = sel.value;
      sel.innerHTML = sim.results.map((r) => `<option>${r.algorithm}</option>`).join("");
      if (keep) sel.value = keep;
      drawSim();
      showList();
    } catch (e) {
      sim = null;
      $("sim-info").textContent = String(e);
      $("sim-info").className = "err";
    }
  }, 0);
}

await init();
$("ic-e").addEventListener("input", drawIc);
$("ic-n").addEventListener("input", drawIc);
for (const id of ["w00", "w01", "w10", "w11"]) $(id).addEventListener("input", updateRor);
$("sim-run").addEventListener("click", runSim);
$("sim-alg").addEventListener("change", showList);
drawIc();
updateRor();
runSim();
