// Result grid: tiles in exactly the order the service returned them.
// The grid performs no arithmetic on scores beyond formatting.

import type { RankedResult } from "./types.js";
import type { SelectionState } from "./selection.js";

export type GridOptions = {
  thumbUrl: (id: string) => string;
  selection?: SelectionState;
  onToggle?: (id: string, chosen: boolean) => void;
};

export function renderResults(
  container: HTMLElement,
  results: RankedResult[],
  options: GridOptions,
): void {
  container.replaceChildren();
  if (results.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "No results. Issue a query to populate the grid.";
    container.appendChild(empty);
    return;
  }
  for (const result of results) {
    container.appendChild(tile(result, options));
  }
}

function tile(result: RankedResult, options: GridOptions): HTMLElement {
  const cell = document.createElement("figure");
  cell.className = "result-tile";
  cell.dataset.resultId = result.id;
  cell.dataset.rank = String(result.rank);

  const img = document.createElement("img");
  img.alt = result.id;
  img.src = options.thumbUrl(result.id);
  img.addEventListener("error", () => {
    // thumbnail failure keeps the tile (and its rank position) in place
    img.removeAttribute("src");
    cell.classList.add("thumb-missing");
  });
  cell.appendChild(img);

  const caption = document.createElement("figcaption");
  caption.textContent = `#${result.rank} ${result.id} (${result.score.toFixed(4)})`;
  cell.appendChild(caption);

  if (options.selection) {
    const selection = options.selection;
    if (selection.has(result.id)) cell.classList.add("chosen");
    cell.addEventListener("click", () => {
      const chosen = selection.toggle(result.id);
      cell.classList.toggle("chosen", chosen);
      options.onToggle?.(result.id, chosen);
    });
  }
  return cell;
}

/** Ids of the rendered tiles in DOM order (used by tests and the app). */
export function renderedOrder(container: HTMLElement): string[] {
  return [...container.querySelectorAll<HTMLElement>("[data-result-id]")].map(
    (el) => el.dataset.resultId as string,
  );
}
