/* DOM layer: one board per assignment, tiles moved in place on reorder.
 *
 * Tiles are built once per sample and then shuffled around with
 * insertBefore; rebuilding nodes mid-drag would break HTML5 drag event
 * delivery. Nothing here decides anything, every interaction is routed
 * through the flow.
 *
 * Bias control: tiles are equal-sized, carry no filenames or scores, and
 * the alt text is the same for every image.
 */

import { StudyApi } from "./api.js";
import { DoneState, FlowState, RankingState, StudyFlow } from "./flow.js";

export class StudyView {
  private tiles = new Map<string, HTMLLIElement>();
  private board: HTMLUListElement | null = null;
  private submitBtn: HTMLButtonElement | null = null;
  private noticeEl: HTMLParagraphElement | null = null;
  private progressEl: HTMLParagraphElement | null = null;
  private boardSample: string | null = null;
  private draggedId: string | null = null;
  private retrySerial = 0;

  constructor(
    private root: HTMLElement,
    private api: StudyApi,
    private flow: StudyFlow,
  ) {}

  render(state: FlowState): void {
    if (state.kind === "loading") {
      this.boardSample = null;
      this.renderMessage("loading the next sample...");
    } else if (state.kind === "fatal") {
      this.boardSample = null;
      this.renderMessage(`${state.message} Reload the page to try again.`);
    } else if (state.kind === "done") {
      this.boardSample = null;
      this.renderDone(state);
    } else {
      if (state.sampleId !== this.boardSample) this.buildBoard(state);
      this.syncBoard(state);
    }
  }

  private renderMessage(text: string): void {
    const p = document.createElement("p");
    p.className = "status";
    p.textContent = text;
    this.root.replaceChildren(p);
  }

  private renderDone(state: DoneState): void {
    const heading = document.createElement("h1");
    heading.textContent = "All done, thank you";
    const count = document.createElement("p");
    count.textContent = `You ranked ${state.answered} of ${state.total} samples.`;
    const tokenLine = document.createElement("p");
    tokenLine.className = "token-line";
    tokenLine.textContent = "Your rater token: ";
    const code = document.createElement("code");
    code.textContent = state.rater;
    tokenLine.appendChild(code);
    this.root.replaceChildren(heading, count, tokenLine);
  }

  private buildBoard(state: RankingState): void {
    this.tiles.clear();
    this.boardSample = state.sampleId;

    const header = document.createElement("header");
    const title = document.createElement("h1");
    title.textContent = "Rank the faces";
    const hint = document.createElement("p");
    hint.className = "instructions";
    hint.textContent =
      `Order the images from most realistic (1) to least realistic (${state.served.length}). ` +
      "Drag a tile, or focus it and use the arrow keys.";
    this.progressEl = document.createElement("p");
    this.progressEl.className = "progress";
    header.append(title, hint, this.progressEl);

    this.noticeEl = document.createElement("p");
    this.noticeEl.className = "notice";
    this.noticeEl.hidden = true;

    this.board = document.createElement("ul");
    this.board.className = "board";
    for (const id of state.served) {
      const tile = this.buildTile(state.sampleId, id);
      this.tiles.set(id, tile);
      this.board.appendChild(tile);
    }

    const footer = document.createElement("footer");
    this.submitBtn = document.createElement("button");
    this.submitBtn.type = "button";
    this.submitBtn.className = "submit";
    this.submitBtn.addEventListener("click", () => void this.flow.submit());
    footer.appendChild(this.submitBtn);

    this.root.replaceChildren(header, this.noticeEl, this.board, footer);
  }

  private buildTile(sampleId: string, id: string): HTMLLIElement {
    const tile = document.createElement("li");
    tile.className = "tile";
    tile.draggable = true;
    tile.tabIndex = 0;
    tile.dataset.id = id;

    const rank = document.createElement("span");
    rank.className = "rank";
    tile.appendChild(rank);

    const img = document.createElement("img");
    img.alt = "face to judge";
    img.draggable = false;
    img.addEventListener("load", () => this.flow.imageLoaded(id));
    img.addEventListener("error", () => this.flow.imageFailed(id));
    img.src = this.api.imageUrl(sampleId, id);
    tile.appendChild(img);

    const retry = document.createElement("button");
    retry.type = "button";
    retry.className = "retry";
    retry.textContent = "reload image";
    retry.hidden = true;
    retry.addEventListener("click", (ev) => {
      ev.stopPropagation();
      this.retrySerial += 1;
      // cache buster so the browser actually refetches
      img.src = `${this.api.imageUrl(sampleId, id)}?retry=${this.retrySerial}`;
    });
    tile.appendChild(retry);

    tile.addEventListener("dragstart", (ev: DragEvent) => {
      this.draggedId = id;
      tile.classList.add("dragging");
      // Firefox refuses to drag without data attached
      ev.dataTransfer?.setData("text/plain", id);
      if (ev.dataTransfer) ev.dataTransfer.effectAllowed = "move";
    });
    tile.addEventListener("dragend", () => {
      this.draggedId = null;
      tile.classList.remove("dragging");
    });
    tile.addEventListener("dragover", (ev) => {
      ev.preventDefault();
      this.dragOverTile(id);
    });
    tile.addEventListener("drop", (ev) => ev.preventDefault());

    tile.addEventListener("keydown", (ev) => this.tileKey(ev, id, tile));
    return tile;
  }

  /** Live reorder while dragging: insert the dragged tile at the hovered slot. */
  private dragOverTile(overId: string): void {
    const dragged = this.draggedId;
    if (!dragged || dragged === overId) return;
    const state = this.flow.current();
    if (state.kind !== "ranking") return;
    const from = state.ordering.indexOf(dragged);
    const to = state.ordering.indexOf(overId);
    if (from !== -1 && to !== -1 && from !== to) this.flow.move(from, to);
  }

  private tileKey(ev: KeyboardEvent, id: string, tile: HTMLElement): void {
    const state = this.flow.current();
    if (state.kind !== "ranking") return;
    const idx = state.ordering.indexOf(id);
    if (idx === -1) return;
    let to: number | null = null;
    if (ev.key === "ArrowLeft" || ev.key === "ArrowUp") to = idx - 1;
    else if (ev.key === "ArrowRight" || ev.key === "ArrowDown") to = idx + 1;
    else if (ev.key === "Home") to = 0;
    else if (ev.key === "End") to = state.ordering.length - 1;
    if (to === null) return;
    ev.preventDefault();
    this.flow.move(idx, to);
    // moving the node can drop focus in some browsers
    tile.focus();
  }

  private syncBoard(state: RankingState): void {
    const board = this.board;
    if (!board) return;
    state.ordering.forEach((id, i) => {
      const tile = this.tiles.get(id);
      if (!tile) return;
      if (board.children[i] !== tile) board.insertBefore(tile, board.children[i] ?? null);
      const rank = tile.querySelector(".rank");
      if (rank) rank.textContent = String(i + 1);
      tile.setAttribute("aria-label", `face, rank ${i + 1} of ${state.ordering.length}`);
      const broken = state.failed.includes(id);
      tile.classList.toggle("broken", broken);
      const retry = tile.querySelector<HTMLButtonElement>(".retry");
      if (retry) retry.hidden = !broken;
    });
    if (this.progressEl) {
      const current = Math.min(state.answered + 1, state.total);
      this.progressEl.textContent = `sample ${current} of ${state.total}`;
    }
    if (this.noticeEl) {
      this.noticeEl.hidden = state.notice === null;
      this.noticeEl.textContent = state.notice ?? "";
    }
    if (this.submitBtn) {
      this.submitBtn.disabled = !this.flow.canSubmit();
      this.submitBtn.textContent = state.submitting ? "submitting..." : "submit ranking";
    }
  }
}
