import init, { Market } from "./pkg/idtrade_wasm.js";

const $ = (id) => document.getElementById(id);
let market = null;

function drawSeries(ctx, values, lo, hi, color, box) {
  ctx.strokeStyle = color;
  ctx.beginPath();
  values.forEach((v, t) => {
    const x = box.x + (t / (values.length - 1)) * box.w;
    const y = box.y + box.h - ((v - lo) / (hi - lo || 1)) * box.h;
    t === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
  });
  ctx.stroke();
}

function draw(prices, forecast, wind, volumes) {
  const canvas = $("chart");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const half = (canvas.height - 30) / 2;
  const top = { x: 40, y: 10, w: canvas.width - 50, h: half - 10 };
  const bottom = { x: 40, y: half + 20, w: canvas.width - 50, h: half - 10 };
  const all = [...prices, ...forecast];
  const lo = Math.min(...all);
  const hi = Math.max(...all);
  ctx.lineWidth = 1.5;
  drawSeries(ctx, forecast, lo, hi, "#aaa", top);
  drawSeries(ctx, prices, lo, hi, "#1f77b4", top);
  drawSeries(ctx, wind, 0, 1, "#2ca02c", bottom);
  drawSeries(ctx, volumes, 0, 1, "#d62728", bottom);
  ctx.fillStyle = "#333";
  ctx.font = "11px sans-serif";
  ctx.fillText(hi.toFixed(1), 2, top.y + 10);
  ctx.fillText(lo.toFixed(1), 2, top.y + top.h);
  ctx.fillText("1 MWh", 2, bottom.y + 10);
  ctx.fillText("0", 2, bottom.y + bottom.h);
}

function generate() {
  try {
    market?.free();
    market = new Market(Number($("seed").value), Number($("products").value), Number($("amplitude").value), Number($("noise").value));
  } catch (e) {
    $("status").textContent = String(e);
    return;
  }
  const select = $("product");
  select.innerHTML = "";
  for (let i = 0; i < market.len(); i++) {
    select.add(new Option(market.product(i), i));
  }
  $("status").textContent = `${market.len()} products`;
  $("replay").disabled = false;
  $("evaluate").disabled = false;
  $("report").textContent = "";
  replay();
}

function replay() {
  const i = Number($("product").value);
  const run = market.run($("agent").value, i);
  const bound = market.bound(i);
  $("summary").textContent =
    `profit ${run.profit.toFixed(2)} EUR, ${run.steps} trades, perfect-foresight bound ${bound.toFixed(2)} EUR`;
  draw(market.prices(i), market.price_forecast(i), market.wind(i), run.volumes());
  run.free();
}

await init();
$("generate").onclick = generate;
$("replay").onclick = replay;
$("product").onchange = replay;
$("agent").onchange = replay;
$("evaluate").onclick = () => {
  $("report").textContent = market.report();
};
generate();
