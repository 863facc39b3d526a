import type { SessionClient } from "./api.js";
import type { AddLandmarkResponse } from "./types.js";

/**
 * Two-click landmark placement: first click marks the pre location, second
 * the post location, then an explicit confirm submits the pair. Cancelling
 * at any stage discards it without touching the server.
 */
export type PendingStage = "idle" | "pre-placed" | "post-placed" | "submitting";

export class PendingPair {
  stage: PendingStage = "idle";
  pre: number[] | null = null;
  post: number[] | null = null;

  placePre(world: number[]): void {
    if (this.stage !== "idle") {
      throw new Error(`cannot place pre point in stage ${this.stage}`);
    }
    this.pre = [...world];
    this.stage = "pre-placed";
  }

  placePost(world: number[]): void {
    if (this.stage !== "pre-placed") {
      throw new Error(`cannot place post point in stage ${this.stage}`);
    }
    this.post = [...world];
    this.stage = "post-placed";
  }

  cancel(): void {
    this.pre = null;
    this.post = null;
    this.stage = "idle";
  }

  get readyToSubmit(): boolean {
    return this.stage === "post-placed" && this.pre !== null && this.post !== null;
  }

  /** Submit the confirmed pair; resolves with the server's add response. */
  async confirm(client: SessionClient): Promise<AddLandmarkResponse> {
    if (!this.readyToSubmit) {
      throw new Error("both ends must be placed before confirming");
    }
    this.stage = "submitting";
    try {
      const response = await client.addLandmark(this.pre!, this.post!);
      this.cancel();
      return response;
    } catch (err) {
      // keep the placed points so the user can adjust and retry
      this.stage = "post-placed";
      throw err;
    }
  }
}
