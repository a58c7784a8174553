/**
 * Garment catalog client: lists the service's garments and switches the
 * active one. At most one selection request is in flight; rapid switches
 * collapse to last-write-wins.
 */

export interface GarmentEntry {
  garment_id: string;
  mode: string;
  preview: string | null;
}

export interface CatalogSnapshot {
  garments: GarmentEntry[];
  selected: string;
}

export type FetchLike = (url: string, init?: {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class CatalogClient {
  private inFlight: Promise<void> | null = null;
  private queuedId: string | null = null;
  selected: string | null = null;
  garments: GarmentEntry[] = [];
  onError: ((message: string) => void) | null = null;
  onChange: (() => void) | null = null;

  constructor(private readonly baseUrl: string, private readonly fetchImpl: FetchLike) {}

  /** Refresh the catalog from the server (called on every (re)connect). */
  async refresh(): Promise<CatalogSnapshot> {
    const response = await this.fetchImpl(`${this.baseUrl}/garments`);
    if (!response.ok) {
      throw new Error(`catalog listing failed: ${response.status}`);
    }
    const payload = (await response.json()) as CatalogSnapshot;
    this.garments = payload.garments;
    this.selected = payload.selected;
    this.onChange?.();
    return payload;
  }

  /** Request a switch; resolves once the final (last-written) id is acked. */
  select(garmentId: string): Promise<void> {
    this.queuedId = garmentId;
    if (this.inFlight === null) {
      this.inFlight = this.drain();
    }
    return this.inFlight;
  }

  private async drain(): Promise<void> {
    try {
      while (this.queuedId !== null) {
        const id = this.queuedId;
        this.queuedId = null;
        const response = await this.fetchImpl(`${this.baseUrl}/garments/select`, {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: JSON.stringify({ garment_id: id }),
        });
        if (response.ok) {
          this.selected = id;
          this.onChange?.();
        } else {
          this.onError?.(`selection of '${id}' rejected (${response.status})`);
        }
      }
    } finally {
      this.inFlight = null;
    }
  }
}
