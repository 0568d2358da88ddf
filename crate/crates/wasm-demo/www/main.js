// Build the bindings first (see the README):
//   wasm-bindgen --target web --out-dir www/pkg target/wasm32-unknown-unknown/release/scgan_wasm_demo.wasm
import init, { degrade, schedule_weights, TinyRun } from "./pkg/scgan_wasm_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function paint(canvas, rgba, w, h) {
  canvas.width = w;
  canvas.height = h;
  canvas.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(rgba), w, h), 0, 0);
}

function runDegrade() {
  try {
    const d = degrade($("kind").value, num("level"), 64, num("seed"));
    paint($("clean"), d.clean_rgba(), 64, 64);
    paint($("noisy"), d.noisy_rgba(), 64, 64);
    paint($("noise"), d.noise_rgba(), 64, 64);
    $("psnr").textContent = `PSNR ${d.psnr().toFixed(2)} dB`;
    d.free();
  } catch (e) {
    $("psnr").textContent = String(e);
  }
}

function runSchedule() {
  const c = $("curve");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  let w;
  try {
    w = schedule_weights(num("ep1"), num("ep2"), num("ep3"), num("w1"), num("w2"), num("w3"), num("ramp"));
    $("sched-err").textContent = "";
  } catch (e) {
    $("sched-err").textContent = String(e);
    return;
  }
  const n = w.length / 3;
  const top = Math.max(1e-9, ...w);
  const colors = ["#2ca02c", "#d62728", "#9467bd"];
  const x = (e) => 20 + (e / n) * (c.width - 40);
  const y = (v, k) => c.height - 20 - (v / top) * (c.height - 40) - 2 * k;
  for (let k = 0; k < 3; k++) {
    g.strokeStyle = colors[k];
    g.lineWidth = 2;
    g.beginPath();
    for (let e = 0; e < n; e++) {
      const v = w[3 * e + k];
      if (e === 0) g.moveTo(x(e), y(v, k));
      else g.lineTo(x(e), y(v, k));
      g.lineTo(x(e + 1), y(v, k));
    }
    g.stroke();
  }
}

let run = null;

function resetRun() {
  if (run) run.free();
  run = new TinyRun(25, 7);
  showRun(null);
}

function showRun(losses) {
  paint($("preview"), run.preview_rgba(), 96, 32);
  const parts = [`epochs ${run.epochs_done()}  next phase ${run.phase()}  extracted std ${run.extracted_std().toFixed(2)} (target 25)`];
  if (losses) {
    const [d, g, clean, pn, rec] = losses;
    parts.push(`l_d ${d.toFixed(4)}  l_g ${g.toFixed(4)}  clean ${clean.toFixed(5)}  pn ${pn.toFixed(5)}  rec ${rec.toFixed(5)}`);
  }
  $("status").textContent = parts.join("\n");
}

async function train(epochs) {
  for (let i = 0; i < epochs; i++) {
    const losses = run.epoch();
    showRun(losses);
    await new Promise((r) => setTimeout(r, 0));
  }
}

await init();
$("degrade").onclick = runDegrade;
for (const id of ["kind", "level", "seed"]) $(id).onchange = runDegrade;
for (const id of ["ep1", "ep2", "ep3", "w1", "w2", "w3", "ramp"]) $(id).oninput = runSchedule;
$("reset").onclick = resetRun;
$("train1").onclick = () => train(1);
$("train10").onclick = () => train(10);
runDegrade();
runSchedule();
resetRun();
