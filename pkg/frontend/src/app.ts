import { SessionClient } from "./api.js";
import { compositeOverlay, grayscale } from "./colormap.js";
import { PendingPair } from "./pending.js";
import { residualRows, sortByResidualDesc, summarize } from "./residuals.js";
import {
  ViewState,
  defaultView,
  frameValue,
  isStale,
  sliceToWorld,
  worldToSlice,
} from "./view.js";
import type { SliceFrame } from "./types.js";

/**
 * Minimal single-page wiring: one canvas, one residual table, the two-click
 * placement flow. All numbers shown come from server responses; this file
 * only fetches, colors and composites.
 */
export class App {
  readonly pending = new PendingPair();
  view: ViewState;
  private lastFrames: { base: SliceFrame | null; overlay: SliceFrame | null } = {
    base: null,
    overlay: null,
  };
  private busy = false; // at most one in-flight mutation

  constructor(
    readonly client: SessionClient,
    readonly canvas: HTMLCanvasElement,
    readonly table: HTMLTableElement,
    readonly status: HTMLElement,
  ) {
    this.view = defaultView(client.sessionId);
    canvas.addEventListener("click", (ev) => void this.onCanvasClick(ev));
  }

  async refresh(): Promise<void> {
    const state = await this.client.state();
    const kind = this.view.layers.warped ? "warped_volume" : "uncertainty";
    const overlay = this.view.layers.uncertainty
      ? await this.client.getSlice("uncertainty", this.view.axis, this.view.index)
      : null;
    const base =
      kind === "warped_volume"
        ? await this.client.getSlice(kind, this.view.axis, this.view.index)
        : overlay;
    this.lastFrames = { base, overlay };
    if (base) this.view.renderedRevision = base.meta.revision;
    this.draw();
    this.renderTable(state);
    this.status.textContent = isStale(this.view, state.revision)
      ? `revision ${this.view.renderedRevision} (stale, server at ${state.revision})`
      : `revision ${state.revision}`;
  }

  private draw(): void {
    const { base, overlay } = this.lastFrames;
    if (!base) return;
    const [d0, d1] = base.meta.dims;
    const bounds = this.view.scaleBounds ?? [base.meta.min, base.meta.max];
    let pixels = grayscale(base.values, bounds[0], bounds[1]);
    if (overlay && this.view.layers.uncertainty) {
      const ob = this.view.scaleBounds ?? [overlay.meta.min, overlay.meta.max];
      pixels = compositeOverlay(pixels, overlay.values, ob[0], ob[1], this.view.overlayOpacity);
    }
    this.canvas.width = d1;
    this.canvas.height = d0;
    const ctx = this.canvas.getContext("2d");
    if (ctx) {
      const data = new Uint8ClampedArray(pixels.length);
      data.set(pixels);
      ctx.putImageData(new ImageData(data, d1, d0), 0, 0);
    }
  }

  private async onCanvasClick(ev: MouseEvent): Promise<void> {
    const frame = this.lastFrames.base;
    if (!frame || this.busy) return;
    const rect = this.canvas.getBoundingClientRect();
    const i1 = Math.floor(((ev.clientX - rect.left) / rect.width) * frame.meta.dims[1]);
    const i0 = Math.floor(((ev.clientY - rect.top) / rect.height) * frame.meta.dims[0]);
    const world = sliceToWorld(frame.meta, i0, i1);
    if (this.pending.stage === "idle") {
      this.pending.placePre(world);
      this.status.textContent = `pre point at ${fmt(world)}; click the post location`;
    } else if (this.pending.stage === "pre-placed") {
      this.pending.placePost(world);
      this.busy = true;
      try {
        const added = await this.pending.confirm(this.client);
        this.status.textContent =
          `added landmark ${added.landmark_id}: uncertainty ` +
          `${added.uncertainty_before.toFixed(2)} -> ${added.uncertainty_after.toFixed(2)}`;
        await this.refresh();
      } catch (err) {
        this.pending.cancel();
        this.status.textContent = `add rejected: ${(err as Error).message}`;
      } finally {
        this.busy = false;
      }
    }
  }

  private renderTable(state: Awaited<ReturnType<SessionClient["state"]>>): void {
    const rows = sortByResidualDesc(residualRows(state));
    const line = summarize(rows, state);
    const header =
      "<tr><th>id</th><th>source</th><th>residual (mm)</th><th>pre (mm)</th></tr>";
    const body = rows
      .map(
        (r) =>
          `<tr${r.manual ? ' class="manual"' : ""}><td>${r.id}</td>` +
          `<td>${r.source}</td><td>${r.residualMm.toFixed(2)}</td>` +
          `<td>${fmt(r.pre)}</td></tr>`,
      )
      .join("");
    const caption =
      line.meanResidualMm === null
        ? "no landmarks"
        : `${line.nLandmarks} landmarks (${line.nManual} manual), ` +
          `mean residual ${line.meanResidualMm.toFixed(2)} mm`;
    this.table.innerHTML = `<caption>${caption}</caption>${header}${body}`;
  }
}

function fmt(p: number[]): string {
  return p.map((v) => v.toFixed(1)).join(", ");
}

/** Entry point used by index.html. */
export async function boot(baseUrl: string, landmarks: unknown): Promise<App> {
  const { client } = await SessionClient.create(baseUrl, landmarks);
  const app = new App(
    client,
    document.getElementById("slice") as HTMLCanvasElement,
    document.getElementById("residuals") as HTMLTableElement,
    document.getElementById("status") as HTMLElement,
  );
  await app.refresh();
  return app;
}

export { frameValue, worldToSlice };
