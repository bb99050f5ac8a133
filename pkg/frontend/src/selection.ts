// Feedback selection state: the user marks exactly three relevant results.

export const FEEDBACK_SIZE = 3;

export class SelectionState {
  private readonly chosen = new Set<string>();

  constructor(readonly queryId: string) {}

  /** Toggle an id; refuses to grow past the feedback size. Returns the
   * resulting membership. */
  toggle(id: string): boolean {
    if (this.chosen.has(id)) {
      this.chosen.delete(id);
      return false;
    }
    if (this.chosen.size >= FEEDBACK_SIZE) {
      return false;
    }
    this.chosen.add(id);
    return true;
  }

  has(id: string): boolean {
    return this.chosen.has(id);
  }

  get size(): number {
    return this.chosen.size;
  }

  get ids(): string[] {
    return [...this.chosen];
  }

  /** Submit is enabled exactly when three results are chosen. */
  get canSubmit(): boolean {
    return this.chosen.size === FEEDBACK_SIZE;
  }

  clear(): void {
    this.chosen.clear();
  }
}
